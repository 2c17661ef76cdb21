use progmoney::crypto::{KeyPair, Signature, SignatureScheme};
use progmoney::money::{self, replay_provenance, MintSpec, MoneyError, MoneyUnit, UnitState};
use progmoney::policy::{compile, CheckedPolicy, EvalContext};
use progmoney::registry::{
    audit_export, parse_ledger, replay, EndorseRequest, RecordKind, Registry, RegistryError, StampDraft,
};
use proptest::prelude::*;

const HOLDERS: usize = 4;

struct World {
    reg: Registry,
    bank: KeyPair,
    holders: Vec<KeyPair>,
    tax: KeyPair,
    units: Vec<MoneyUnit>,
    policies: Vec<CheckedPolicy>,
}

impl World {
    fn new() -> Self {
        let mut reg = Registry::new();
        let bank = KeyPair::derive("bank", 1);
        let tax = KeyPair::derive("tax", 1);
        let holders: Vec<KeyPair> = (0..HOLDERS).map(|i| KeyPair::derive(&format!("h{i}"), 1)).collect();
        for k in holders.iter().chain([&bank, &tax]) {
            reg.register_key(k).unwrap();
        }
        reg.authorize_issuer("bank", 10_000_000).unwrap();
        let policies = [
            "OBLIGATION ON RECEIVE IF category == \"sale\" DO PAY 1/5 TO \"tax\";",
            "PROHIBITION ON TRANSFER_REQUEST IF category == \"weapons\";",
            "",
        ]
        .iter()
        .map(|s| compile(s).unwrap())
        .collect();
        Self {
            reg,
            bank,
            holders,
            tax,
            units: Vec::new(),
            policies,
        }
    }

    fn key(&self, id: &str) -> &KeyPair {
        if id == "tax" {
            return &self.tax;
        }
        self.holders.iter().find(|k| k.key_id == id).expect("known holder")
    }

    fn check_invariants(&self) -> Result<(), TestCaseError> {
        let st = self.reg.state();
        prop_assert_eq!(st.minted - st.burned, st.live_supply());
        prop_assert!(st.conserved());
        let model: u64 = self.units.iter().map(|u| u.value).sum();
        prop_assert_eq!(model, st.live_supply());
        for u in &self.units {
            prop_assert_eq!(u.state, UnitState::Active);
            prop_assert!(money::verify_integrity(u, self.reg.keys()).is_ok());
            prop_assert_eq!(replay_provenance(u), Some((u.owner.clone(), u.value)));
            let live = self.reg.live(&u.id).expect("model unit is live");
            prop_assert_eq!((&live.owner, live.value), (&u.owner, u.value));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Op {
    Mint { holder: usize, value: u64, policy: usize },
    Split { pick: usize, part: u64 },
    Merge { a: usize, b: usize },
    Transfer { pick: usize, to: usize, category: &'static str },
    Burn { pick: usize },
    Tamper { pick: usize, index: usize, mask: u8 },
}

fn op() -> impl Strategy<Value = Op> {
    let category = prop::sample::select(vec!["sale", "weapons", "gift"]);
    prop_oneof![
        (0..HOLDERS, 1..10_000u64, 0..3usize).prop_map(|(holder, value, policy)| Op::Mint { holder, value, policy }),
        (any::<usize>(), 0..20_000u64).prop_map(|(pick, part)| Op::Split { pick, part }),
        (any::<usize>(), any::<usize>()).prop_map(|(a, b)| Op::Merge { a, b }),
        (any::<usize>(), 0..HOLDERS + 1, category).prop_map(|(pick, to, category)| Op::Transfer { pick, to, category }),
        any::<usize>().prop_map(|pick| Op::Burn { pick }),
        (any::<usize>(), any::<usize>(), 1..128u8).prop_map(|(pick, index, mask)| Op::Tamper { pick, index, mask }),
    ]
}

fn apply(w: &mut World, op: &Op, at: u64) -> Result<(), TestCaseError> {
    let n = w.units.len();
    let before = (w.reg.state().clone(), w.reg.records().len());
    let result: Result<(), MoneyError> = match *op {
        Op::Mint { holder, value, policy } => {
            let spec = MintSpec::new(value, "SIM", &w.holders[holder].key_id, at);
            money::mint(&mut w.reg, &w.bank, w.policies[policy].clone(), spec).map(|u| w.units.push(u))
        }
        _ if n == 0 => return Ok(()),
        Op::Split { pick, part } => {
            let i = pick % n;
            let owner = w.key(&w.units[i].owner).clone();
            money::split(&w.units[i], part, &owner, &mut w.reg, at).map(|(a, b)| {
                w.units.swap_remove(i);
                w.units.extend([a, b]);
            })
        }
        Op::Merge { a, b } => {
            let (i, j) = (a % n, b % n);
            let owner = w.key(&w.units[i].owner).clone();
            let r = if i == j {
                // Merging a unit with itself must be refused by the registry.
                money::merge(&w.units[i], &w.units[i], &owner, &mut w.reg, at).map(|_| ())
            } else {
                money::merge(&w.units[i], &w.units[j], &owner, &mut w.reg, at).map(|m| {
                    let (hi, lo) = (i.max(j), i.min(j));
                    w.units.swap_remove(hi);
                    w.units.swap_remove(lo);
                    w.units.push(m);
                })
            };
            prop_assert!(i != j || r.is_err(), "self-merge accepted");
            r
        }
        Op::Transfer { pick, to, category } => {
            let i = pick % n;
            let from = w.key(&w.units[i].owner).clone();
            let to = if to == HOLDERS { w.tax.clone() } else { w.holders[to].clone() };
            let ctx = EvalContext::new(w.units[i].value, at).category(category).counterparty(&from.key_id);
            money::transfer(&w.units[i], &from, &to, &ctx, &mut w.reg).map(|out| {
                w.units.swap_remove(i);
                w.units.extend(out.payments);
                w.units.extend(out.received);
            })
        }
        Op::Burn { pick } => {
            let i = pick % n;
            let owner = w.key(&w.units[i].owner).clone();
            money::zeroise(&w.units[i], "manual", &owner, &mut w.reg, at).map(|out| {
                assert_eq!(out.unit.state, UnitState::Zeroised);
                w.units.swap_remove(i);
            })
        }
        Op::Tamper { pick, index, mask } => {
            // A tampered unit is detected and zeroised on its next touch.
            let i = pick % n;
            let mut bad = w.units[i].clone();
            let len = bad.policy.source_canonical().len();
            if len == 0 || !bad.policy.corrupt_canonical_byte(index % len, mask) {
                return Ok(());
            }
            let detected = money::verify_integrity(&bad, w.reg.keys());
            prop_assert!(matches!(detected, Err(MoneyError::TamperDetected(_))));
            let owner = w.key(&bad.owner).clone();
            let to = w.holders[0].clone();
            let ctx = EvalContext::new(bad.value, at);
            let refused = money::transfer(&bad, &owner, &to, &ctx, &mut w.reg);
            prop_assert!(matches!(refused, Err(MoneyError::TamperDetected(_))));
            prop_assert_eq!(w.reg.records().len(), before.1);
            let out = money::zeroise(&bad, "tamper", &owner, &mut w.reg, at).unwrap();
            prop_assert_eq!(out.burned, w.units[i].value);
            w.units.swap_remove(i);
            Ok(())
        }
    };
    if result.is_err() {
        // Atomicity: a refused operation leaves the registry untouched.
        prop_assert_eq!(w.reg.state(), &before.0);
        prop_assert_eq!(w.reg.records().len(), before.1);
    }
    w.check_invariants()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn lifecycle_conserves_value(ops in prop::collection::vec(op(), 1..60)) {
        let mut w = World::new();
        for (t, op) in ops.iter().enumerate() {
            apply(&mut w, op, t as u64)?;
        }
        prop_assert!(w.reg.audit().is_ok());
        let text = w.reg.export();
        let records = parse_ledger(&text).unwrap();
        prop_assert_eq!(&records, &w.reg.records().to_vec());
        let exported = audit_export(&text).map_err(|v| TestCaseError::fail(v[0].to_string()))?;
        prop_assert_eq!(exported.live, w.reg.state().live.clone());
        let mut incremental = Registry::new().state().clone();
        // Conservation after every single append.
        for k in 1..=records.len() {
            let keys = w.reg.keys().clone();
            let st = replay(&records[..k], &keys, &Default::default())
                .map_err(|v| TestCaseError::fail(v[0].to_string()))?;
            prop_assert!(st.conserved());
            incremental = st;
        }
        prop_assert_eq!(incremental.live, w.reg.state().live.clone());
    }

    #[test]
    fn exactly_one_of_competing_spends_wins(order in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle()) {
        let mut w = World::new();
        let unit = money::mint(&mut w.reg, &w.bank, w.policies[2].clone(), MintSpec::new(500, "SIM", "h0", 0)).unwrap();
        let sender = w.holders[0].clone();
        let requests: Vec<EndorseRequest> = (0..6)
            .map(|k| {
                let mut req = EndorseRequest {
                    kind: RecordKind::Transfer,
                    inputs: vec![unit.id.clone()],
                    outputs: Vec::new(),
                    from: "h0".into(),
                    to: format!("h{}", 1 + k % (HOLDERS - 1)),
                    at: 1 + k as u64,
                    reason: None,
                };
                let mut draft = StampDraft {
                    unit: unit.id.clone(),
                    amount: 500,
                    nonce: 1,
                    sender_sig: Signature::forge("h0", &[], &[]),
                };
                draft.sender_sig = w.reg.keys().sign(&sender, &req.stamp_body(&draft)).unwrap();
                req.outputs.push(draft);
                req
            })
            .collect();
        let mut wins = 0;
        for &k in &order {
            match w.reg.endorse(&requests[k]) {
                Ok(_) => wins += 1,
                Err(e) => prop_assert!(matches!(e, RegistryError::DoubleSpend(_)), "{e}"),
            }
        }
        prop_assert_eq!(wins, 1);
        prop_assert_eq!(w.reg.state().live_supply(), 500);
        prop_assert!(w.reg.audit().is_ok());
    }
}

#[test]
fn tampered_ledger_line_fails_audit() {
    let mut w = World::new();
    let u = money::mint(&mut w.reg, &w.bank, w.policies[0].clone(), MintSpec::new(100, "SIM", "h0", 0)).unwrap();
    let ctx = EvalContext::new(100, 1).category("sale");
    money::transfer(&u, &w.holders[0], &w.holders[1], &ctx, &mut w.reg).unwrap();
    let text = w.reg.export();
    assert!(audit_export(&text).is_ok());
    let forged = text.replacen("|100|", "|900|", 1);
    assert_ne!(forged, text);
    assert!(audit_export(&forged).is_err());
    let dropped: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    assert!(audit_export(&dropped).is_err());
}
