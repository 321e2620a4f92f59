//! Property tests: every emitter/parser pair reproduces its input exactly
//! (bit-exact for floating-point coordinates).

use ccq_core::catalog::{
    emit_code_str, emit_partition_str, emit_pointset_str, parse_code_str, parse_partition_str,
    parse_pointset_str, Code,
};
use ccq_core::construct::PointSet;
use ccq_core::scheme::RelationPartition;
use proptest::prelude::*;

fn partition_strategy() -> impl Strategy<Value = RelationPartition> {
    (1usize..=8)
        .prop_flat_map(|n| {
            let cells = n * n;
            let r = 1usize..=cells.min(5);
            (Just(n), r).prop_flat_map(move |(n, r)| {
                (
                    Just(n),
                    Just(r),
                    proptest::collection::vec(0..r as u16, cells),
                )
            })
        })
        .prop_map(|(n, r, mut labels)| {
            // Force contiguity: plant one cell of every label.
            for l in 0..r {
                labels[l] = l as u16;
            }
            RelationPartition::new(n, labels).expect("labels are contiguous by construction")
        })
}

fn code_strategy() -> impl Strategy<Value = Code> {
    (2usize..=10, 1usize..=8)
        .prop_flat_map(|(q, n)| {
            (
                Just(q),
                Just(n),
                proptest::collection::vec(
                    proptest::collection::vec(0..q as u8, n),
                    1..=12,
                ),
            )
        })
        .prop_map(|(q, n, words)| Code::new(q, n, words).expect("digits below the alphabet size"))
}

fn pointset_strategy() -> impl Strategy<Value = PointSet> {
    (1usize..=4)
        .prop_flat_map(|dim| {
            (
                Just(dim),
                proptest::collection::vec(
                    proptest::collection::vec(-1.0f64..1.0, dim),
                    1..=8,
                ),
            )
        })
        .prop_filter_map("points must be unit-normalizable and distinct", |(dim, raw)| {
            let mut pts: Vec<Vec<f64>> = Vec::with_capacity(raw.len());
            for v in raw {
                let norm = v.iter().map(|&x| x * x).sum::<f64>().sqrt();
                if norm < 1e-3 {
                    return None;
                }
                pts.push(v.iter().map(|&x| x / norm).collect());
            }
            for a in 0..pts.len() {
                for b in a + 1..pts.len() {
                    let close = pts[a]
                        .iter()
                        .zip(&pts[b])
                        .all(|(x, y)| (x - y).abs() < 1e-6);
                    if close {
                        return None;
                    }
                }
            }
            PointSet::new(dim, pts, "prop").ok()
        })
}

proptest! {
    #[test]
    fn partition_roundtrip(part in partition_strategy()) {
        let text = emit_partition_str(&part);
        let back = parse_partition_str(&text).unwrap();
        prop_assert_eq!(back.n(), part.n());
        for x in 0..part.n() {
            for y in 0..part.n() {
                prop_assert_eq!(back.label(x, y), part.label(x, y));
            }
        }
        // Emission is a fixed point.
        prop_assert_eq!(emit_partition_str(&back), text);
    }

    #[test]
    fn code_roundtrip(code in code_strategy()) {
        let text = emit_code_str(&code);
        let back = parse_code_str(&text).unwrap();
        prop_assert_eq!(back.q(), code.q());
        prop_assert_eq!(back.len(), code.len());
        prop_assert_eq!(back.words(), code.words());
        prop_assert_eq!(emit_code_str(&back), text);
    }

    #[test]
    fn pointset_roundtrip(ps in pointset_strategy()) {
        let text = emit_pointset_str(&ps);
        let back = parse_pointset_str(&text, ps.tag()).unwrap();
        prop_assert_eq!(back.dim(), ps.dim());
        prop_assert_eq!(back.points().len(), ps.points().len());
        for (a, b) in back.points().iter().zip(ps.points()) {
            for (x, y) in a.iter().zip(b) {
                // Bit-exact round trip, -0.0 and 0.0 both allowed to map to
                // themselves.
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        prop_assert_eq!(emit_pointset_str(&back), text);
    }
}
