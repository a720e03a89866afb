//! Quantitative unsafety of concrete and symbolic states against a safe set.

use crate::autodiff::Backend;
use crate::domain::{endpoints, DiffBox};
use crate::error::{Error, Result};
use crate::ir::{SafeInterval, SafeSet};
use crate::scalar::Scalar;

/// Euclidean distance from `values` to the nearest safe box; 0 inside.
pub fn unsafe_point(values: &[f64], safe: &SafeSet) -> f64 {
    safe.boxes
        .iter()
        .map(|bx| {
            bx.iter()
                .zip(values)
                .map(|(ax, &x)| ax.gap(x).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Unsafety of a box: `1 − Vol(V ∧ A)/Vol(V)` when the box meets the safe
/// set with positive measure, otherwise the box-to-set distance plus one.
///
/// Degenerate axes are measured by counting, so a point box either lies in a
/// safe box (fraction 1) or does not (fraction 0).
pub fn unsafe_box<T: Scalar, B: Backend<T>>(b: &mut B, bx: &DiffBox<B::V>, safe: &SafeSet) -> Result<B::V> {
    if bx.dim() != safe.dim() {
        return Err(Error::Shape(format!(
            "box of dimension {} against safe set of dimension {}",
            bx.dim(),
            safe.dim()
        )));
    }
    let ends: Vec<(B::V, B::V)> = (0..bx.dim()).map(|i| endpoints(b, bx.center[i], bx.dev[i])).collect();
    let point_axis: Vec<bool> = bx.dev.iter().map(|&e| b.value(e) == T::zero()).collect();

    let mut fractions = Vec::with_capacity(safe.boxes.len());
    for sb in &safe.boxes {
        let mut frac: Option<B::V> = None;
        let mut empty = false;
        for (i, ax) in sb.iter().enumerate() {
            let (lo, hi) = ends[i];
            let f = if point_axis[i] {
                if ax.contains(b.value(bx.center[i]).as_f64()) {
                    continue;
                }
                empty = true;
                break;
            } else {
                let top = clip_hi(b, hi, ax);
                let bottom = clip_lo(b, lo, ax);
                let overlap = b.sub(top, bottom);
                let overlap = b.relu(overlap);
                let len = b.sub(hi, lo);
                b.div(overlap, len)?
            };
            frac = Some(match frac {
                Some(acc) => b.mul(acc, f),
                None => f,
            });
        }
        if !empty {
            fractions.push(frac.unwrap_or_else(|| b.constant(T::one())));
        }
    }
    let total = b.sum(&fractions);
    let one = b.constant(T::one());
    let total = b.min(total, one);
    if b.value(total) > T::zero() {
        return Ok(b.affine(&[(-T::one(), total)], T::one()));
    }

    let mut best: Option<B::V> = None;
    for sb in &safe.boxes {
        let mut sq = Vec::with_capacity(sb.len());
        for (i, ax) in sb.iter().enumerate() {
            let (lo, hi) = ends[i];
            let mut parts = Vec::with_capacity(2);
            if let Some(l) = ax.lo {
                parts.push(b.affine(&[(-T::one(), hi)], T::lit(l)));
            }
            if let Some(h) = ax.hi {
                parts.push(b.affine(&[(T::one(), lo)], T::lit(-h)));
            }
            for g in parts {
                let g = b.relu(g);
                if b.value(g) > T::zero() {
                    sq.push(b.square(g));
                }
            }
        }
        let d = if sq.is_empty() {
            b.constant(T::zero())
        } else {
            let s = b.sum(&sq);
            b.sqrt(s)?
        };
        best = Some(match best {
            Some(acc) => b.min(acc, d),
            None => d,
        });
    }
    let d = best.ok_or_else(|| Error::IllFormed("safe set has no boxes".into()))?;
    Ok(b.add_const(d, T::one()))
}

fn clip_hi<T: Scalar, B: Backend<T>>(b: &mut B, hi: B::V, ax: &SafeInterval) -> B::V {
    match ax.hi {
        Some(h) => {
            let h = b.constant(T::lit(h));
            b.min(hi, h)
        }
        None => hi,
    }
}

fn clip_lo<T: Scalar, B: Backend<T>>(b: &mut B, lo: B::V, ax: &SafeInterval) -> B::V {
    match ax.lo {
        Some(l) => {
            let l = b.constant(T::lit(l));
            b.max(lo, l)
        }
        None => lo,
    }
}

/// Per-trajectory safety loss: the sum of its assert unsafety terms.
pub fn trajectory_unsafe<T: Scalar, B: Backend<T>>(b: &mut B, terms: &[B::V]) -> B::V {
    if terms.is_empty() {
        return b.constant(T::zero());
    }
    b.sum(terms)
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::autodiff::Eval;
    use crate::ir::SafeInterval;
    use proptest::prelude::*;

    /// 1–3 disjoint slabs along axis 0 with a random extent on axis 1.
    fn safe_boxes(dim: usize) -> impl Strategy<Value = Vec<Vec<(f64, f64)>>> {
        (prop::collection::vec(-10.0..10.0f64, 2..=6), prop::collection::vec((-8.0..4.0f64, 0.5..6.0f64), 3)).prop_map(
            move |(mut cuts, extra)| {
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                (0..cuts.len() / 2)
                    .map(|k| {
                        let mut b = vec![(cuts[2 * k], cuts[2 * k + 1])];
                        if dim == 2 {
                            b.push((extra[k].0, extra[k].0 + extra[k].1));
                        }
                        b
                    })
                    .collect()
            },
        )
    }

    fn to_set(boxes: &[Vec<(f64, f64)>]) -> SafeSet {
        SafeSet::new(
            boxes
                .iter()
                .map(|b| b.iter().map(|&(lo, hi)| SafeInterval::closed(lo, hi)).collect())
                .collect(),
        )
        .unwrap()
    }

    fn case() -> impl Strategy<Value = (Vec<Vec<(f64, f64)>>, Vec<(f64, f64, f64)>)> {
        (1..=2usize).prop_flat_map(|dim| {
            (
                safe_boxes(dim),
                prop::collection::vec((-12.0..12.0f64, 0.0..4.0f64, -1.0..=1.0f64), dim),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn zero_iff_contained((boxes, axes) in case()) {
            prop_assume!(!boxes.is_empty());
            let safe = to_set(&boxes);
            let bx = DiffBox {
                center: axes.iter().map(|a| a.0).collect(),
                dev: axes.iter().map(|a| a.1).collect(),
            };
            let inside = boxes.iter().any(|b| {
                b.iter().zip(&axes).all(|(&(lo, hi), &(c, e, _))| lo <= c - e && c + e <= hi)
            });
            let u = unsafe_box(&mut Eval, &bx, &safe).unwrap();
            prop_assert!(u >= 0.0);
            prop_assert_eq!(u <= 1e-9, inside, "unsafe {}", u);

            let point: Vec<f64> = axes.iter().map(|(c, e, t)| c + e * t).collect();
            prop_assert_eq!(unsafe_point(&point, &safe) == 0.0, safe.contains(&point));
            // dominance: a safe box has only safe points
            if u == 0.0 {
                prop_assert_eq!(unsafe_point(&point, &safe), 0.0);
            }
        }

        #[test]
        fn regimes_meet_at_the_seam(hi in 1.0..50.0f64, w in 0.1..10.0f64, eps in 1e-9..1e-6f64) {
            let safe = SafeSet::interval(hi - 5.0, hi);
            let touching = DiffBox { center: vec![hi + w / 2.0], dev: vec![w / 2.0] };
            let overlapping = DiffBox { center: vec![hi - eps + w / 2.0], dev: vec![w / 2.0] };
            let t = unsafe_box(&mut Eval, &touching, &safe).unwrap();
            let o = unsafe_box(&mut Eval, &overlapping, &safe).unwrap();
            prop_assert!((t - 1.0).abs() < 1e-9);
            prop_assert!((o - 1.0).abs() < 2.0 * eps / w + 1e-9);
        }
    }
}
