"""Smoke test for the Python bindings.

Build first:
    PYO3_BUILD_EXTENSION_MODULE=1 cargo build -p progmoney-py --release
then run:
    python3 python/smoke_test.py
"""

import importlib.machinery
import importlib.util
import math
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load():
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libpyprogmoney.so"
        if lib.exists():
            loader = importlib.machinery.ExtensionFileLoader("pyprogmoney", str(lib))
            spec = importlib.util.spec_from_loader("pyprogmoney", loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            return module
    sys.exit("libpyprogmoney.so not found; build the progmoney-py crate first")


pm = load()

assert pm.h64(b"") == "cbf29ce484222325"
assert pm.h64(b"foobar") == "85944171f73967e8"

tax = pm.Policy('OBLIGATION ON RECEIVE IF category == "sale" DO PAY 1/5 TO "tax";')
assert tax.evaluate("RECEIVE", 1000, 0, category="sale") == ("PERMIT", [("PAY", "tax", 200)])
assert tax.evaluate("RECEIVE", 1000, 0, category="rent") == ("PERMIT", [])
assert len(tax.content_hash) == 16

ban = pm.Policy('PROHIBITION ON TRANSFER_REQUEST IF category == "weapons" AND licence != "arms_permit";')
assert ban.evaluate("TRANSFER_REQUEST", 5, 0, category="weapons")[0] == "FORBID"
assert ban.evaluate("TRANSFER_REQUEST", 5, 0, category="weapons", licence="arms_permit")[0] == "PERMIT"

assert pm.check_policy("DUTY ON RECEIVE;")
assert pm.check_policy("PERMISSION ON TICK;") == []
try:
    pm.Policy("OBLIGATION ON TICK DO PAY 2/1 TO \"x\";")
    raise AssertionError("over-unity PAY accepted")
except ValueError:
    pass

assert math.isclose(pm.log_utility([1, 1]), 2 * math.log(2))
holds, best, alloc, even = pm.equality_check(12, 3)
assert holds and alloc == [4, 4, 4] and math.isclose(best, even)

book = pm.Book()
assert book.submit("ASK", 10, 5, "seller", 0) == []
assert book.submit("BID", 12, 3, "buyer", 1) == [(10, 3, "buyer", "seller", 1)]
assert book.best_ask() == (10, 2) and book.best_bid() is None

run = pm.run_scenario(str(ROOT / "scenarios" / "sales_tax.scn"))
again = pm.run_scenario(str(ROOT / "scenarios" / "sales_tax.scn"))
assert run.ledger == again.ledger and run.observations == again.observations
assert run.tax_collected > 0
assert "tax_collected = %d" % run.tax_collected in run.report
assert pm.audit_ledger(run.ledger) == []
assert pm.audit_ledger(run.ledger.split("\n", 1)[1])

print("smoke test passed: tax_collected=%d records=%d" % (run.tax_collected, len(run.ledger.splitlines())))
