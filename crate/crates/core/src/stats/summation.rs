//! Pairwise summation carried in double-double precision.

const LEAF: usize = 16;

/// Error-free transformation: `a + b = s + e` exactly.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

#[inline]
fn add_dd((ah, al): (f64, f64), (bh, bl): (f64, f64)) -> (f64, f64) {
    let (s, e) = two_sum(ah, bh);
    let e = e + al + bl;
    two_sum(s, e)
}

fn pairwise_dd(values: &[f64]) -> (f64, f64) {
    if values.len() <= LEAF {
        let mut acc = (0.0, 0.0);
        for &v in values {
            acc = add_dd(acc, (v, 0.0));
        }
        acc
    } else {
        let (left, right) = values.split_at(values.len() / 2);
        add_dd(pairwise_dd(left), pairwise_dd(right))
    }
}

/// Sum of `values`, rounded once from a double-double accumulator.
pub fn accurate_sum(values: &[f64]) -> f64 {
    let (hi, lo) = pairwise_dd(values);
    hi + lo
}
