#![allow(dead_code)]

use std::sync::Arc;

use proptest::prelude::*;
use qimeasure::{CylinderFunction, Subshift};

/// Random 0/1 matrices with `k <= max_k` that define an irreducible shift.
pub fn irreducible_shift(max_k: usize) -> impl Strategy<Value = Arc<Subshift>> {
    (1..=max_k)
        .prop_flat_map(|k| (Just(k), prop::collection::vec(prop::bool::weighted(0.6), k * k)))
        .prop_filter_map("irreducible with nonzero columns", |(k, bits)| {
            let rows: Vec<Vec<u8>> = bits.chunks(k).map(|r| r.iter().map(|&b| b as u8).collect()).collect();
            Subshift::new(&rows).ok().filter(|s| s.is_irreducible())
        })
}

/// Any valid shift, reducible or not.
pub fn any_shift(max_k: usize) -> impl Strategy<Value = Arc<Subshift>> {
    (1..=max_k)
        .prop_flat_map(|k| (Just(k), prop::collection::vec(prop::bool::weighted(0.6), k * k)))
        .prop_filter_map("nonzero columns", |(k, bits)| {
            let rows: Vec<Vec<u8>> = bits.chunks(k).map(|r| r.iter().map(|&b| b as u8).collect()).collect();
            Subshift::new(&rows).ok()
        })
}

/// A function on `shift` with depth in `1..=max_depth` and values in `range`.
pub fn function(
    shift: Arc<Subshift>,
    max_depth: usize,
    range: std::ops::Range<f64>,
) -> impl Strategy<Value = CylinderFunction> {
    (1..=max_depth).prop_flat_map(move |d| {
        let s = shift.clone();
        prop::collection::vec(range.clone(), s.word_count(d))
            .prop_map(move |v| CylinderFunction::from_values(s.clone(), d, v).unwrap())
    })
}

pub fn func(shift: &Arc<Subshift>, depth: usize, values: &[f64]) -> CylinderFunction {
    CylinderFunction::from_values(shift.clone(), depth, values.to_vec()).unwrap()
}

pub fn block_shift() -> Arc<Subshift> {
    Subshift::new(&[
        vec![1, 1, 0, 0],
        vec![1, 1, 0, 0],
        vec![0, 0, 1, 1],
        vec![0, 0, 1, 1],
    ])
    .unwrap()
}

pub fn identity_shift() -> Arc<Subshift> {
    Subshift::new(&[vec![1, 0], vec![0, 1]]).unwrap()
}

/// `V(a, b) = 2 P(a, b)` on the full 2-shift with the column-stochastic
/// `P = [[1/3, 1/2], [2/3, 1/2]]`.
pub fn markov_weight(full: &Arc<Subshift>) -> CylinderFunction {
    func(full, 2, &[2.0 / 3.0, 1.0, 4.0 / 3.0, 1.0])
}

/// `f` at the prefix of a 0-based code sequence.
pub fn eval(f: &CylinderFunction, codes: &[u8]) -> f64 {
    let symbols: Vec<usize> = codes[..f.depth()].iter().map(|&c| c as usize + 1).collect();
    f.value(&qimeasure::Word::new(f.shift(), &symbols).unwrap()).unwrap()
}

/// A depth-`m` weight (`m >= 2`) with `R_V(1) = 1`: on each `r⁻¹[w]` the
/// values `u(a w)` are rescaled to sum to `c(w1)`.
pub fn normalize_weight(u: &CylinderFunction) -> CylinderFunction {
    let shift = u.shift().clone();
    assert!(u.depth() >= 2);
    CylinderFunction::from_fn(shift.clone(), u.depth(), |aw| {
        let w = &aw[1..];
        let c = shift.column_sums()[w[0] as usize] as f64;
        let mut total = 0.0;
        let mut bw = aw.to_vec();
        for b in shift.preimage_symbols(w[0] as usize + 1).unwrap() {
            bw[0] = (b - 1) as u8;
            total += eval(u, &bw);
        }
        c * eval(u, aw) / total
    })
}

/// `V g / (g∘r)`, for which `(1/g) dρ` is a fixed point whenever
/// `R_V(1) = 1`.
pub fn cohomologous(v: &CylinderFunction, g: &CylinderFunction) -> CylinderFunction {
    let depth = v.depth().max(g.depth() + 1);
    CylinderFunction::from_fn(v.shift().clone(), depth, |x| eval(v, x) * eval(g, x) / eval(g, &x[1..]))
}

/// Normalized weight of depth 2 or 3 and a positive `g` of depth 1 or 2.
pub fn fixed_point_data(shift: Arc<Subshift>) -> impl Strategy<Value = (CylinderFunction, CylinderFunction)> {
    let s = shift.clone();
    (2usize..=3, 1usize..=2).prop_flat_map(move |(m, p)| {
        let s1 = s.clone();
        let s2 = s.clone();
        (
            prop::collection::vec(0.1f64..2.0, s.word_count(m))
                .prop_map(move |v| normalize_weight(&CylinderFunction::from_values(s1.clone(), m, v).unwrap())),
            prop::collection::vec(0.2f64..3.0, s.word_count(p))
                .prop_map(move |v| CylinderFunction::from_values(s2.clone(), p, v).unwrap()),
        )
    })
}
