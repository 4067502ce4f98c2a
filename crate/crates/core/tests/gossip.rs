//! Delta exchange invariants over random version histories.

use foa_core::capability::{apply_delta, diff_deltas, embed_text, BitSet, BloomFilter, Vcv, VcvSet, FULL_DIM};
use proptest::prelude::*;

fn vcv(id: usize, v: u64) -> Vcv {
    Vcv::new(
        format!("agent-{id}"),
        embed_text(&format!("skill {id} rev {v}"), FULL_DIM).unwrap(),
        BloomFilter::default(),
        vec![10.0, 10.0, 1.0, 100.0],
        BitSet::new(64).unwrap(),
        embed_text(&format!("spec {id}"), FULL_DIM).unwrap(),
        v,
    )
    .unwrap()
}

fn set(entries: &[(usize, u64)]) -> VcvSet {
    let mut s = VcvSet::new();
    for &(id, v) in entries {
        s.upsert(vcv(id, v));
    }
    s
}

proptest! {
    #[test]
    fn push_pull_converges_to_max_versions(
        a in prop::collection::vec((0usize..6, 0u64..5), 0..12),
        b in prop::collection::vec((0usize..6, 0u64..5), 0..12),
    ) {
        let (mut x, mut y) = (set(&a), set(&b));
        let to_y = diff_deltas("x", &x, &y.digest());
        let to_x = diff_deltas("y", &y, &x.digest());
        apply_delta(&mut y, &to_y).unwrap();
        apply_delta(&mut x, &to_x).unwrap();
        prop_assert_eq!(x.digest(), y.digest());
        for (id, v) in x.digest() {
            let want = a.iter().chain(&b).filter(|(i, _)| format!("agent-{i}") == id).map(|(_, v)| *v).max();
            prop_assert_eq!(Some(v), want);
        }
    }

    #[test]
    fn applying_a_delta_twice_changes_nothing(
        a in prop::collection::vec((0usize..6, 0u64..5), 0..12),
    ) {
        let src = set(&a);
        let mut dst = VcvSet::new();
        let delta = diff_deltas("src", &src, &dst.digest());
        apply_delta(&mut dst, &delta).unwrap();
        let before = dst.digest();
        prop_assert!(apply_delta(&mut dst, &delta).unwrap().is_empty());
        prop_assert_eq!(before, dst.digest());
    }
}
