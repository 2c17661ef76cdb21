//! Python bindings: policies, hashing, utility metrics, the order book and
//! whole-scenario runs.

use std::collections::BTreeMap;
use std::path::PathBuf;

use progmoney::crypto;
use progmoney::markets::{self, Order, Side, Trade};
use progmoney::metrics;
use progmoney::policy::{self, CheckedPolicy, EvalContext, EventKind, Obligation, Verdict};
use progmoney::registry::audit_export;
use progmoney::report::export_observations;
use progmoney::scenario::Scenario;
use progmoney::sim::Simulation;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

type ObligationRow = (String, String, u64);
type TradeRow = (u64, u64, String, String, u64);

fn value_error(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// FNV-1a digest of `data` as 16 lowercase hex digits.
#[pyfunction]
fn h64(data: &[u8]) -> String {
    crypto::h64(data).to_string()
}

/// Parses and checks `source`. Returns the list of errors, empty when valid.
#[pyfunction]
fn check_policy(source: &str) -> Vec<String> {
    match policy::compile(source) {
        Ok(_) => Vec::new(),
        Err(errors) => errors,
    }
}

#[pyfunction]
fn log_utility(balances: Vec<u64>) -> f64 {
    metrics::log_utility(&balances)
}

/// Exhaustive check that the even split maximises log-utility.
/// Returns `(holds, best, best_allocation, equal_split)`.
#[pyfunction]
fn equality_check(total: u64, hosts: usize) -> PyResult<(bool, f64, Vec<u64>, f64)> {
    let c = metrics::equality_check(total, hosts).map_err(value_error)?;
    Ok((c.holds(), c.best, c.best_allocation.clone(), c.equal_split))
}

/// Audits an exported ledger. Returns the list of violations, empty when clean.
#[pyfunction]
fn audit_ledger(text: &str) -> Vec<String> {
    match audit_export(text) {
        Ok(_) => Vec::new(),
        Err(v) => v.iter().map(ToString::to_string).collect(),
    }
}

fn obligation_tuple(o: &Obligation) -> ObligationRow {
    match o {
        Obligation::Pay { payee, amount } => ("PAY".into(), payee.clone(), *amount),
        Obligation::Notify { target } => ("NOTIFY".into(), target.clone(), 0),
        Obligation::Zeroise { reason } => ("ZEROISE".into(), reason.clone(), 0),
        Obligation::MoveToBestRate => ("MOVE_TO_BEST_RATE".into(), String::new(), 0),
    }
}

#[pyclass(name = "Policy", frozen)]
struct PyPolicy {
    inner: CheckedPolicy,
}

#[pymethods]
impl PyPolicy {
    #[new]
    fn new(source: &str) -> PyResult<Self> {
        policy::compile(source)
            .map(|inner| Self { inner })
            .map_err(|errors| value_error(errors.join("; ")))
    }

    #[getter]
    fn canonical(&self) -> String {
        self.inner.source_canonical().to_string()
    }

    #[getter]
    fn content_hash(&self) -> String {
        self.inner.content_hash().to_string()
    }

    /// Evaluates one event. Returns `(verdict, obligations)` where each
    /// obligation is `(kind, target, amount)`.
    #[pyo3(signature = (event, amount, now, category=None, counterparty=None, location=None, home=None, licence=None, expiry=None, last_contact=0))]
    #[allow(clippy::too_many_arguments)]
    fn evaluate(
        &self,
        event: &str,
        amount: u64,
        now: u64,
        category: Option<String>,
        counterparty: Option<String>,
        location: Option<String>,
        home: Option<String>,
        licence: Option<String>,
        expiry: Option<u64>,
        last_contact: u64,
    ) -> PyResult<(String, Vec<ObligationRow>)> {
        let event = EventKind::from_keyword(event).ok_or_else(|| value_error(format!("unknown event `{event}`")))?;
        let mut ctx = EvalContext::new(amount, now)
            .licence(licence)
            .expiry(expiry)
            .last_contact(last_contact);
        if let Some(c) = category {
            ctx = ctx.category(c);
        }
        if let Some(c) = counterparty {
            ctx = ctx.counterparty(c);
        }
        if let Some(l) = location {
            ctx = ctx.location(l);
        }
        if let Some(h) = home {
            ctx = ctx.home(h);
        }
        let d = policy::evaluate(&self.inner, event, &ctx);
        let verdict = match d.verdict {
            Verdict::Permit => "PERMIT",
            Verdict::Forbid => "FORBID",
        };
        Ok((verdict.into(), d.obligations.iter().map(obligation_tuple).collect()))
    }

    fn __repr__(&self) -> String {
        format!("Policy({})", self.inner.content_hash())
    }
}

/// Continuous double auction book. Orders get arrival numbers automatically.
#[pyclass(name = "Book")]
struct PyBook {
    inner: markets::Book,
    next_seq: u64,
}

fn trade_tuple(t: &Trade) -> TradeRow {
    (t.price, t.qty, t.buyer.clone(), t.seller.clone(), t.at)
}

#[pymethods]
impl PyBook {
    #[new]
    fn new() -> Self {
        Self {
            inner: markets::Book::new(),
            next_seq: 0,
        }
    }

    /// Submits an order (`side` is "BID" or "ASK"). Returns the trades as
    /// `(price, qty, buyer, seller, at)`.
    fn submit(&mut self, side: &str, price: u64, qty: u64, owner: &str, at: u64) -> PyResult<Vec<TradeRow>> {
        let side: Side = side.parse().map_err(value_error)?;
        let order = Order {
            side,
            price,
            qty,
            owner: owner.into(),
            seq: self.next_seq,
        };
        let trades = self.inner.submit(order, at).map_err(value_error)?;
        self.next_seq += 1;
        Ok(trades.iter().map(trade_tuple).collect())
    }

    /// `(price, qty)` of the best resting bid.
    fn best_bid(&self) -> Option<(u64, u64)> {
        self.inner.best_bid().map(|o| (o.price, o.qty))
    }

    fn best_ask(&self) -> Option<(u64, u64)> {
        self.inner.best_ask().map(|o| (o.price, o.qty))
    }

    fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }
}

/// Result of a scenario run.
#[pyclass(name = "RunResult", frozen, get_all)]
struct PyRunResult {
    observations: String,
    ledger: String,
    report: String,
    balances: BTreeMap<String, u64>,
    tax_collected: u64,
    burns: BTreeMap<String, u64>,
    forbidden: u64,
}

/// Runs a scenario file to completion. Raises `ValueError` for a bad
/// scenario and `RuntimeError` for a failed run or audit.
#[pyfunction]
#[pyo3(signature = (path, seed=None))]
fn run_scenario(py: Python<'_>, path: PathBuf, seed: Option<u64>) -> PyResult<PyRunResult> {
    let mut scenario = Scenario::load(&path).map_err(|e| value_error(format!("{}: {e}", path.display())))?;
    if let Some(seed) = seed {
        scenario.sim.seed = seed;
    }
    py.detach(|| {
        let mut sim = Simulation::new(scenario).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        sim.run().map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        if let Err(v) = sim.registry().audit() {
            return Err(PyRuntimeError::new_err(format!("ledger audit failed: {}", v[0])));
        }
        let out = sim.outcome();
        Ok(PyRunResult {
            observations: export_observations(sim.observations()),
            ledger: sim.registry().export(),
            report: sim.report().to_string(),
            balances: out.balances,
            tax_collected: out.tax_collected,
            burns: out.burns,
            forbidden: out.forbidden,
        })
    })
}

#[pymodule]
fn pyprogmoney(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(h64, m)?)?;
    m.add_function(wrap_pyfunction!(check_policy, m)?)?;
    m.add_function(wrap_pyfunction!(log_utility, m)?)?;
    m.add_function(wrap_pyfunction!(equality_check, m)?)?;
    m.add_function(wrap_pyfunction!(audit_ledger, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyBook>()?;
    m.add_class::<PyRunResult>()?;
    Ok(())
}
