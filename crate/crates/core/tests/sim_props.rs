use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use progmoney::markets::{cda_submit, Book, Order, Side};
use progmoney::metrics::log_utility;
use progmoney::money::UnitState;
use progmoney::rate::Rate;
use progmoney::registry::RecordKind;
use progmoney::report::export_observations;
use progmoney::scenario::Scenario;
use progmoney::sim::Simulation;
use progmoney::supply::{project, SupplyRule};
use proptest::prelude::*;

fn sim(text: &str) -> Simulation {
    let base = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let sc = Scenario::parse(text, Some(&base)).unwrap_or_else(|e| panic!("{e}\n{text}"));
    let mut s = Simulation::new(sc).unwrap();
    s.run().unwrap();
    s
}

const SHOP: &str = "[hosts]
central_bank = CENTRAL_BANK HOME allowance=100000000
tax_authority = TAX_AUTHORITY HOME
government = GOVERNMENT HOME
alice = CONSUMER HOME
bob = CONSUMER HOME
hunter = CONSUMER HOME licence=arms_permit
fence = VENDOR HOME
gunsmith = VENDOR HOME
mallory = ADVERSARY HOME

[law]
sale = legal 1/5
weapons = licence arms_permit
stolen_goods = illegal

[policies]
lawful = @legality @sales_tax(1/5)
";

#[derive(Debug, Clone)]
enum Step {
    Buy(usize, usize, u64, usize),
    Split(usize, u64),
    Merge(usize),
    Send(usize, usize),
    Tamper(usize),
    Replay,
    Wait,
}

const BUYERS: [&str; 3] = ["alice", "bob", "hunter"];
const VENDORS: [&str; 2] = ["fence", "gunsmith"];
const CATEGORIES: [&str; 3] = ["sale", "weapons", "stolen_goods"];

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        6 => (0..3usize, 0..2usize, 1..2_000u64, 0..3usize).prop_map(|(b, v, p, c)| Step::Buy(b, v, p, c)),
        1 => (0..3usize, 1..500u64).prop_map(|(b, a)| Step::Split(b, a)),
        1 => (0..3usize).prop_map(Step::Merge),
        1 => (0..3usize, 0..2usize).prop_map(|(b, v)| Step::Send(b, v)),
        1 => (0..3usize).prop_map(Step::Tamper),
        1 => Just(Step::Replay),
        1 => Just(Step::Wait),
    ]
}

fn script(seed: u64, steps: &[Step]) -> String {
    let mut s = format!("[sim]\nseed = {seed}\nlatency = 1 4\n\n{SHOP}\n[script]\n");
    for b in BUYERS {
        writeln!(s, "0 MINT central_bank {b} 20000 lawful").unwrap();
    }
    let mut t = 1;
    for st in steps {
        let line = match st {
            Step::Buy(b, v, p, c) => format!("BUY {} {} {p} {}", BUYERS[*b], VENDORS[*v], CATEGORIES[*c]),
            Step::Split(b, a) => format!("SPLIT {} {a}", BUYERS[*b]),
            Step::Merge(b) => format!("MERGE {}", BUYERS[*b]),
            Step::Send(b, v) => format!("SEND {} {} hello", BUYERS[*b], VENDORS[*v]),
            Step::Tamper(b) => format!("TAMPER mallory {}", BUYERS[*b]),
            Step::Replay => "REPLAY mallory 3".to_string(),
            Step::Wait => {
                t += 1;
                continue;
            }
        };
        writeln!(s, "{t} {line}").unwrap();
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shop_invariants(seed in any::<u64>(), steps in prop::collection::vec(step(), 1..60)) {
        let text = script(seed, &steps);
        let s = sim(&text);

        // Clock monotonicity and event reconciliation.
        let ticks: Vec<u64> = s.observations().iter().map(|o| o.tick).collect();
        prop_assert!(ticks.windows(2).all(|w| w[0] <= w[1]));
        let (scheduled, processed) = s.event_counts();
        prop_assert_eq!(scheduled, processed);
        prop_assert_eq!(s.pending(), 0);

        // Tax completeness over completed sales.
        let taxed: u64 = s.sales().iter().filter(|x| x.category == "sale").map(|x| x.price / 5).sum();
        prop_assert_eq!(s.balance("tax_authority"), taxed);
        for sale in s.sales() {
            prop_assert_eq!(sale.tax, if sale.category == "sale" { sale.price / 5 } else { 0 });
        }

        // Legality soundness.
        for sale in s.sales() {
            prop_assert!(sale.category != "stolen_goods", "stolen goods sold: {:?}", sale);
            prop_assert!(sale.category != "weapons" || sale.buyer == "hunter", "unlicensed weapons sale: {:?}", sale);
        }

        // Replays never succeed.
        prop_assert!(s.observations().iter().all(|o| o.event != "replay_accepted"));

        // Conservation and report reconciliation.
        prop_assert!(s.registry().audit().is_ok());
        let out = s.outcome();
        let report = s.report();
        prop_assert_eq!(report.get("tax_collected").unwrap(), out.tax_collected.to_string());
        for (host, bal) in &out.balances {
            prop_assert_eq!(report.get(&format!("balance.{host}")).unwrap(), bal.to_string());
            prop_assert_eq!(*bal, s.balance(host));
        }
        let minted: u64 = s.registry().records().iter()
            .filter(|r| r.kind == RecordKind::Mint).map(|r| r.amounts[0]).sum();
        let burned: u64 = out.burns.values().sum();
        let live: u64 = out.balances.values().sum();
        prop_assert_eq!(minted, live + burned);

        // Every tampered unit that was touched ended zeroised, never spent.
        for o in s.observations().iter().filter(|o| o.event == "tamper_detected") {
            let id = o.field("unit").unwrap();
            prop_assert_eq!(s.unit(id).map(|u| u.state), Some(UnitState::Zeroised));
        }

        // Same seed, same bytes.
        let again = sim(&text);
        prop_assert_eq!(export_observations(s.observations()), export_observations(again.observations()));
        prop_assert_eq!(s.registry().export(), again.registry().export());
    }

    #[test]
    fn foreign_units_zeroise_within_a_tick(move_at in 1..20u64, buy_at in 1..20u64, seed in any::<u64>()) {
        let text = format!(
            "[sim]\nseed = {seed}\nend = 25\n\n[hosts]\ncentral_bank = CENTRAL_BANK HOME allowance=10000\ngovernment = GOVERNMENT HOME\nalice = CONSUMER HOME\nbob = CONSUMER HOME\nexport = VENDOR ABROAD\n\n[law]\nsale = legal\n\n[policies]\nhome = file:../policies/jurisdiction_home.pol\n\n[script]\n0 MINT central_bank alice 100 home\n0 MINT central_bank bob 100 home\n{move_at} MOVE_HOST alice ABROAD\n{buy_at} BUY bob export 40 sale\n"
        );
        let s = sim(&text);
        let zeroised = |host: &str| -> Vec<u64> {
            s.observations().iter()
                .filter(|o| o.event == "zeroised" && o.host == host)
                .map(|o| o.tick).collect()
        };
        let a = zeroised("alice");
        prop_assert_eq!(a.len(), 1);
        prop_assert!(a[0] >= move_at && a[0] <= move_at + 1, "alice zeroised at {}", a[0]);
        let e = zeroised("export");
        prop_assert_eq!(e.len(), 1);
        prop_assert!(e[0] >= buy_at && e[0] <= buy_at + 1, "export zeroised at {}", e[0]);
        prop_assert_eq!(s.balance("bob"), 60);
    }

    #[test]
    fn delegation_follows_improving_rates(posts in prop::collection::vec((0..3usize, 1..20u64), 1..10)) {
        // Deposit rates only ever improve. Once the forbidden bank leads the
        // board, the money refuses to follow and stays put.
        let banks = ["bank_a", "bank_b", "bank_c"];
        let mut text = String::from("[sim]\nseed = 3\nyear_ticks = 1000\n\n[hosts]\ncentral_bank = CENTRAL_BANK HOME allowance=100000\nalice = CONSUMER HOME\nbank_a = BANK HOME category=deposit\nbank_b = BANK HOME category=deposit\nbank_c = BANK HOME category=deposit\nshady = BANK HOME category=arms_lender\n\n[policies]\nseeker = @delegation file:../policies/owner_restriction.pol\n\n[script]\n0 MINT central_bank alice 1000 seeker\n");
        let mut best: BTreeMap<&str, u64> = BTreeMap::new();
        for (t, (b, bump)) in posts.iter().enumerate() {
            let r = best.entry(banks[*b]).or_insert(0);
            *r += bump;
            writeln!(text, "{} RATE {} {}/1000", 1 + 2 * t, banks[*b], *r).unwrap();
        }
        let shady_at = 1 + 2 * posts.len() as u64;
        writeln!(text, "{shady_at} RATE shady 999/1000").unwrap();
        writeln!(text, "{} CONTACT alice", shady_at + 10).unwrap();
        let s = sim(&text);
        let mut rate_of: BTreeMap<String, Rate> = BTreeMap::new();
        let mut realised = Vec::new();
        for o in s.observations() {
            match o.event.as_str() {
                "rate" => {
                    rate_of.insert(o.host.clone(), o.field("rate").unwrap().parse().unwrap());
                }
                "delegated" => {
                    let bank = o.field("bank").unwrap();
                    prop_assert_ne!(bank, "shady");
                    prop_assert!(o.tick <= shady_at, "moved at {} after the forbidden bank led", o.tick);
                    realised.push(rate_of[bank]);
                }
                _ => {}
            }
        }
        prop_assert!(!realised.is_empty());
        prop_assert!(realised.windows(2).all(|w| w[0] < w[1]), "{realised:?}");
        prop_assert_eq!(s.balance("shady"), 0);
        let refused = s.observations().iter().filter(|o| o.event == "forbidden" && o.tick > shady_at).count();
        prop_assert!(refused >= 10, "only {refused} refusals");
    }

    #[test]
    fn fixed_cap_issuance(r0 in 1..10_000u64, h in 1..50u64, periods in 1..400u64) {
        let rule = SupplyRule::FixedCapGeometric { r0, halving: h };
        let path = project(&rule, 0, periods, 1, u64::MAX).unwrap();
        prop_assert!(path.windows(2).all(|w| w[1].mint <= w[0].mint));
        let total: u64 = path.iter().map(|p| p.mint).sum();
        prop_assert!(total <= 2 * r0 * h, "{total} > {}", 2 * r0 * h);
        prop_assert!(path.iter().all(|p| p.burn == 0));
    }

    #[test]
    fn constant_growth_tracks_compound_interest(s0 in 1..10_000_000u64, k in -100..100i64, years in 1..12u32) {
        let rule = SupplyRule::ConstantGrowth { k: Rate::new(k, 100).unwrap() };
        let path = project(&rule, s0, u64::from(years), 1, u64::MAX).unwrap();
        for (t, p) in path.iter().enumerate() {
            let t = t as u32 + 1;
            let factor = (100 + k) as u128;
            let exact = u128::from(s0) * factor.pow(t) / 100u128.pow(t);
            let got = u128::from(p.supply);
            // Each period floors away less than one unit of the change, and
            // that error is itself compounded: below sum((1+k)^i), plus one
            // for flooring the exact value.
            let slack: u128 = (0..t).map(|i| factor.pow(i).div_ceil(100u128.pow(i))).sum();
            prop_assert!(got.abs_diff(exact) <= slack + 1, "t={t}: {got} vs {exact}, slack {slack}");
            if k <= 0 {
                prop_assert!(got.abs_diff(exact) <= u128::from(t) + 1);
            }
            prop_assert!(p.mint == 0 || p.burn == 0);
        }
    }

    #[test]
    fn cda_conserves_quantity(orders in prop::collection::vec((any::<bool>(), 90..110u64, 1..20u64), 1..30)) {
        let mut book = Book::new();
        let (mut submitted, mut traded) = (0u64, 0u64);
        for (i, (bid, price, qty)) in orders.into_iter().enumerate() {
            let side = if bid { Side::Bid } else { Side::Ask };
            let order = Order { side, price, qty, owner: format!("t{}", i % 4), seq: i as u64 + 1 };
            submitted += qty;
            let (next, trades) = cda_submit(&book, order, i as u64).unwrap();
            for t in &trades {
                prop_assert!(t.qty > 0);
                traded += t.qty;
            }
            if let (Some(b), Some(a)) = (next.best_bid(), next.best_ask()) {
                prop_assert!(b.price < a.price, "book left crossed");
            }
            book = next;
        }
        let resting: u64 = book.bids().chain(book.asks()).map(|o| o.qty).sum();
        // Each traded unit consumes one unit from each side.
        prop_assert_eq!(submitted, resting + 2 * traded);
    }
}

#[test]
fn supply_directives_match_ledger() {
    let text = "[sim]\nseed = 9\nyear_ticks = 12\nperiods_per_year = 12\n\n[hosts]\ncentral_bank = CENTRAL_BANK HOME allowance=100000000\nalice = CONSUMER HOME\n\n[policies]\nplain = PERMISSION ON TRANSFER_REQUEST;\n\n[supply]\nrule = CONSTANT_GROWTH -6/10\nissuer = central_bank\npolicy = plain\ninitial = 1000000\nperiods = 24\n";
    let s = sim(text);
    let records = s.registry().records();
    let minted_after_start: u64 = records
        .iter()
        .filter(|r| r.kind == RecordKind::Mint && r.at > 0)
        .map(|r| r.amounts[0])
        .sum();
    let burned: u64 = records
        .iter()
        .filter(|r| r.kind == RecordKind::Burn && r.reason.as_deref() == Some("supply_burn"))
        .map(|r| r.amounts[0])
        .sum();
    let plan_mint: u64 = s.trajectory().iter().map(|p| p.mint).sum();
    let plan_burn: u64 = s.trajectory().iter().map(|p| p.burn).sum();
    assert_eq!(s.trajectory().len(), 24);
    assert_eq!((minted_after_start, burned), (plan_mint, plan_burn));
    assert!(plan_burn > 0);
    assert_eq!(s.registry().state().live_supply(), s.trajectory().last().unwrap().supply);
}

#[test]
fn log_utility_is_increasing_and_concave() {
    let u = |h: u64| log_utility(&[h]);
    for h in 1..1000 {
        assert!(u(h + 1) > u(h));
        assert!(u(h + 1) - 2.0 * u(h) + u(h - 1) < 0.0, "not concave at {h}");
    }
    assert!(log_utility(&[5, 7]) < log_utility(&[6, 7]));
}
