use std::collections::BTreeSet;

use proptest::prelude::*;
use psi::{align_samples, id_hash, psi_run, PsiError, PsiSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use simnet::tags;

fn ids(prefix: &str, range: std::ops::Range<usize>) -> Vec<String> {
    range.map(|i| format!("{prefix}{i}")).collect()
}

fn set(v: &[String]) -> PsiSet {
    PsiSet::new(v).unwrap()
}

fn as_strings(v: Vec<Vec<u8>>) -> BTreeSet<String> {
    v.into_iter().map(|e| String::from_utf8(e).unwrap()).collect()
}

#[test]
fn disjoint_sets_give_nothing() {
    let (out, _) = psi_run(&set(&ids("a", 0..10)), &set(&ids("b", 0..10)), 1).unwrap();
    assert!(out.is_empty());
}

#[test]
fn identical_sets_give_everything() {
    let s = ids("x", 0..25);
    let (out, _) = psi_run(&set(&s), &set(&s), 2).unwrap();
    assert_eq!(as_strings(out), s.into_iter().collect());
}

#[test]
fn planted_overlap_of_fifty() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let common: Vec<String> = (0..50).map(|_| format!("c{:016x}", rng.random::<u64>())).collect();
    let mut r: Vec<String> = (0..150).map(|i| format!("r{i}")).collect();
    let mut s: Vec<String> = (0..250).map(|i| format!("s{i}")).collect();
    r.extend(common.iter().cloned());
    s.extend(common.iter().cloned());
    let (out, t) = psi_run(&set(&r), &set(&s), 3).unwrap();
    assert_eq!(as_strings(out), common.into_iter().collect());
    assert_eq!(t.len(), 3);
    let names: Vec<&str> = t.messages.iter().map(|m| m.tag_name.as_str()).collect();
    assert_eq!(names, ["PSI_BLIND_REQ", "PSI_BLIND_RESP", "PSI_BLIND_RESP"]);
    assert_eq!(t.messages[0].payload_bytes, 4 + 32 * 200);
    assert_eq!(t.messages[2].payload_bytes, 4 + 32 * 300);
    assert_eq!(t.rounds(), 1);
}

#[test]
fn elements_never_travel_in_the_clear() {
    let r = ids("secret-id-", 0..20);
    let net_ids = ids("secret-id-", 10..30);
    let net = simnet::Network::new(&[simnet::PartyId::ACTIVE, simnet::PartyId::passive(1)], 0);
    net.capture_payloads(true);
    let (re, se) = (net.endpoint(simnet::PartyId::ACTIVE), net.endpoint(simnet::PartyId::passive(1)));
    let (rs, ss) = (set(&r), set(&net_ids));
    net.run::<PsiError>(vec![
        Box::pin(async move { psi::psi_receiver(&re, simnet::PartyId::passive(1), &rs, &mut ChaCha20Rng::seed_from_u64(1)).await.map(|_| ()) }),
        Box::pin(async move { psi::psi_sender(&se, simnet::PartyId::ACTIVE, &ss, &mut ChaCha20Rng::seed_from_u64(2)).await }),
    ])
    .unwrap();
    let mut dump = Vec::new();
    net.transcript().dump_payloads(&mut dump).unwrap();
    for id in r.iter().chain(&net_ids) {
        assert!(!dump.windows(id.len()).any(|w| w == id.as_bytes()));
        let h = id_hash(id.as_bytes());
        assert!(!dump.windows(32).any(|w| w == h));
    }
}

#[test]
fn blinding_is_ephemeral() {
    let (r, s) = (set(&ids("k", 0..30)), set(&ids("k", 15..40)));
    let (o1, t1) = psi_run(&r, &s, 10).unwrap();
    let (o2, t2) = psi_run(&r, &s, 11).unwrap();
    assert_eq!(o1, o2);
    for (a, b) in t1.messages.iter().zip(&t2.messages) {
        assert_ne!(a.digest, b.digest);
    }
}

#[test]
fn sender_view_does_not_depend_on_private_receiver_elements() {
    // Same seed, receiver sets differing only outside the intersection: the
    // sender sees the same message sizes and no repeated group elements.
    let s = set(&ids("n", 0..20));
    let mut r1 = ids("n", 0..5);
    let mut r2 = r1.clone();
    r1.extend(ids("p", 0..10));
    r2.extend(ids("q", 0..10));
    let (_, t1) = psi_run(&set(&r1), &s, 5).unwrap();
    let (_, t2) = psi_run(&set(&r2), &s, 5).unwrap();
    assert_eq!(t1.messages[0].payload_bytes, t2.messages[0].payload_bytes);
    assert_ne!(t1.messages[0].digest, t2.messages[0].digest);
}

#[test]
fn align_padded_sets() {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let common: Vec<String> = (0..3168).map(|i| format!("voice-{i}")).collect();
    let mut a = common.clone();
    let mut b = common.clone();
    a.extend((0..4800 - 3168).map(|_| format!("padA-{:x}", rng.random::<u64>())));
    b.extend((0..4800 - 3168).map(|_| format!("padB-{:x}", rng.random::<u64>())));
    let (ia, ib, t) = align_samples(&a, &b, 9).unwrap();
    assert_eq!(ia.len(), 3168);
    assert_eq!(ia, ib);
    let mut want = common;
    psi::canonical_order(&mut want);
    assert_eq!(ia, want);
    assert_eq!(t.account(&simnet::Filter::tags(&[tags::PSI_ALIGN_RESULT])).messages, 1);
}

#[test]
fn align_single_and_empty() {
    let (ia, ib, _) = align_samples(&ids("u", 0..5), &ids("u", 4..9), 1).unwrap();
    assert_eq!((ia.clone(), ib), (vec!["u4".to_string()], vec!["u4".to_string()]));
    assert_eq!(align_samples(&ids("u", 0..5), &ids("v", 0..5), 1).unwrap_err(), PsiError::EmptyIntersection);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]
    #[test]
    fn matches_plain_intersection(
        r in prop::collection::btree_set(0u16..400, 1..80),
        s in prop::collection::btree_set(0u16..400, 1..80),
        seed in any::<u64>(),
    ) {
        let rv: Vec<String> = r.iter().map(|i| i.to_string()).collect();
        let sv: Vec<String> = s.iter().map(|i| i.to_string()).collect();
        let (out, _) = psi_run(&set(&rv), &set(&sv), seed).unwrap();
        let want: BTreeSet<String> = r.intersection(&s).map(|i| i.to_string()).collect();
        prop_assert_eq!(as_strings(out), want);
    }
}
