//! Ulam discretization of the induced transfer operator, its invariant
//! density, the pullback of that density into R, and the finite versus
//! sigma-finite decision.

mod classify;
mod density;
mod extension;
mod partition;
mod ulam;

pub use classify::{classify_fit, classify_measure, Classification, Verdict};
pub use density::{apply_pf, invariant_density, power_iterate, GridDensity, PowerReport};
pub use extension::{blowup_slope, extend_density, BlowupFit, ExtensionReport};
pub use partition::{build_partition, CellKind, UlamPartition};
pub use ulam::{build_transfer, RejectCounts, TransferMatrix, UlamOptions};

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::error::AcimError;
    use crate::example_maps::{example1, fold_map, neutral_1d, ExampleId, ExampleSpec};
    use crate::geometry::Point;
    use crate::induction::TailProfile;

    fn exact(samples: usize) -> UlamOptions {
        UlamOptions {
            jitter: false,
            ..UlamOptions::new(samples, 5)
        }
    }

    #[test]
    fn partition_counts() {
        let m = example1(&ExampleSpec::new(ExampleId::One)).unwrap();
        let p = build_partition(&m, 64).unwrap();
        assert_eq!(p.cell_count(), 4096);
        assert!((p.cell_volume() - (2.0f64 / 64.0).powi(2)).abs() < 1e-15);
        let flagged = p.kinds.iter().filter(|k| **k == CellKind::Region).count() as f64;
        let area = std::f64::consts::PI * 0.04 / p.cell_volume();
        // perimeter term: at most the cells crossed by the circle
        let perimeter = 2.0 * std::f64::consts::PI * 0.2 / (2.0 / 64.0);
        assert!((flagged - area).abs() < perimeter, "{flagged} vs {area}");
        assert!(p.straddle.iter().any(|s| *s));
        assert!(matches!(build_partition(&m, 4), Err(AcimError::BadResolution(4))));
    }

    #[test]
    fn fold_map_matrix_is_doubly_stochastic() {
        let m = fold_map(2, 3).unwrap();
        let p = Arc::new(build_partition(&m, 24).unwrap());
        let t = build_transfer(&m, p.clone(), &exact(36)).unwrap();
        assert!(t.max_row_sum_error() < 1e-12);
        assert!(t.min_entry() >= 0.0);
        assert!(t.starved.is_empty());
        let (h, _) = invariant_density(&t, 1e-13, 1000).unwrap();
        let target = 1.0 / 4.0;
        for c in &p.active {
            assert!((h.values[*c] - target).abs() < 1e-10);
        }
        let one = GridDensity::on_active(p.clone(), |_| 1.0);
        let pf = apply_pf(&t, &one).unwrap();
        assert!(pf.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn apply_pf_preserves_integrals() {
        let m = neutral_1d(&ExampleSpec::neutral1d(2.0)).unwrap();
        let p = Arc::new(build_partition(&m, 64).unwrap());
        let t = build_transfer(&m, p.clone(), &UlamOptions::new(64, 9)).unwrap();
        assert!(t.max_row_sum_error() < 1e-12);
        let f = GridDensity::on_active(p.clone(), |c| 1.0 + (c as f64 * 0.37).sin());
        let pf = apply_pf(&t, &f).unwrap();
        assert!((pf.mass() - f.mass()).abs() < 1e-12);
        let other = Arc::new(build_partition(&m, 32).unwrap());
        let g = GridDensity::on_active(other, |_| 1.0);
        assert_eq!(apply_pf(&t, &g), Err(AcimError::PartitionMismatch));
    }

    fn small_chain(rows: &[Vec<f64>]) -> TransferMatrix {
        let lo = Point::d1(0.0);
        let hi = Point::d1(1.0);
        let mut p = UlamPartition::uniform(lo, hi, 8).unwrap();
        let n = rows.len();
        p.active.truncate(n);
        for r in p.row_of.iter_mut().skip(n) {
            *r = usize::MAX;
        }
        TransferMatrix::from_dense(Arc::new(p), rows)
    }

    #[test]
    fn power_iteration_on_tiny_chains() {
        let perm = small_chain(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let (h, r) = invariant_density(&perm, 1e-14, 10).unwrap();
        assert_eq!(r.residual, 0.0);
        assert!((h.values[0] - h.values[1]).abs() < 1e-15);
        let id = small_chain(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let (h, r) = invariant_density(&id, 1e-14, 10).unwrap();
        assert_eq!(r.iterations, 1);
        assert!((h.values[0] - h.values[2]).abs() == 0.0);
        // a non-mixing start is not fixed by a two-cycle with a transient
        let cyc = small_chain(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]);
        assert!(matches!(
            invariant_density(&cyc, 1e-14, 50),
            Err(AcimError::NoConvergence { .. })
        ));
    }

    #[test]
    fn classification_rule() {
        let tails = |rho: f64| TailProfile::from_tails((1..=5000).map(|n| (n as f64).powf(-rho)).collect());
        let c = classify_measure(&tails(1.5), (100, 1000), None, 2, 0.15).unwrap();
        assert_eq!(c.verdict, Verdict::Finite);
        assert!(c.tail_sum.unwrap() > 0.0);
        let c = classify_measure(&tails(0.9), (100, 1000), None, 2, 0.15).unwrap();
        assert_eq!(c.verdict, Verdict::SigmaFinite);
        assert!(c.extended_mass_bound.is_none());
        // a 1/n tail sum diverges
        let c = classify_measure(&tails(1.0), (100, 1000), None, 2, 0.15).unwrap();
        assert_eq!(c.verdict, Verdict::SigmaFinite);
        // scatter around the threshold leaves the question open
        let noisy = TailProfile::from_tails(
            (1..=5000)
                .map(|n| (n as f64).powf(-1.15) * (0.05 * (7.0 * n as f64).sin()).exp())
                .collect(),
        );
        let c = classify_measure(&noisy, (100, 1000), None, 2, 0.15).unwrap();
        assert!(c.stderr > 0.0);
        assert_eq!(c.verdict, Verdict::Indeterminate);
        // the tail sum with its power-law continuation matches zeta(1.5)
        let c = classify_measure(&tails(1.5), (100, 1000), None, 2, 0.15).unwrap();
        let zeta = 2.612_375_348_685_488;
        assert!((c.tail_sum.unwrap() - zeta).abs() < 0.05);
    }

    #[test]
    fn extension_keeps_hat_values() {
        let m = neutral_1d(&ExampleSpec::neutral1d(0.5)).unwrap();
        let p = Arc::new(build_partition(&m, 64).unwrap());
        let t = build_transfer(&m, p.clone(), &UlamOptions::new(64, 1)).unwrap();
        let (h, _) = invariant_density(&t, 1e-13, 100_000).unwrap();
        let (ext, rep) = extend_density(&m, &h, 10_000).unwrap();
        for &c in &p.active {
            assert_eq!(ext.values[c], h.values[c]);
        }
        assert!(rep.unresolved_cells.is_empty());
        assert!(rep.partial_mass.windows(2).all(|w| w[1] >= w[0]));
        assert!(ext.mass() > h.mass());
    }
}
