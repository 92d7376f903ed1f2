use mto_lattice::baselines::trivial_bounds;
use mto_lattice::regions::{cognitive_region, noncognitive_region, pareto_indices, RateRegion, RegionBudget, SweepGrid};
use mto_lattice::{theorem1_rates, ChannelConfig, RatePoint, RateOptions};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn small_grid() -> SweepGrid {
    SweepGrid {
        lambda_steps: 3,
        beta_steps: 5,
        gamma_steps: 3,
        ..SweepGrid::default()
    }
}

fn channel() -> ChannelConfig {
    ChannelConfig::new(4.0, vec![1.5, 2.0], vec![1.0, 1.2])
}

fn check_points(config: &ChannelConfig, region: &RateRegion) {
    for p in &region.points {
        let again = theorem1_rates(config, &p.params, &p.matrix, &RateOptions::default()).unwrap();
        assert!(again.is_feasible());
        for (x, y) in again.point.rates.iter().zip(&p.point.rates) {
            assert!((x - y).abs() <= 1e-12, "{} does not reproduce {:?}", p.matrix, p.point);
        }
    }
    let front: Vec<&RatePoint> = region.frontier().map(|p| &p.point).collect();
    for (i, a) in front.iter().enumerate() {
        for (j, b) in front.iter().enumerate() {
            if i != j {
                assert!(!(a.dominates(b, 0.0) && a != b), "{a:?} dominates {b:?} on the frontier");
            }
        }
    }
}

#[test]
fn noncognitive_region_respects_trivial_bounds() {
    let c = channel();
    let region = noncognitive_region(&c, &small_grid(), &RegionBudget::default()).unwrap();
    assert!(!region.points.is_empty());
    let bound = trivial_bounds(&c);
    for p in &region.points {
        assert!(bound.dominates(&p.point, TOL), "{:?} exceeds {:?}", p.point, bound);
    }
    check_points(&c, &region);
}

#[test]
fn cognition_only_enlarges_the_region() {
    let c = channel();
    let grid = small_grid();
    let cog = cognitive_region(&c, &grid, &RegionBudget::default()).unwrap();
    let non = noncognitive_region(&c, &grid, &RegionBudget::default()).unwrap();
    check_points(&c, &cog);
    for p in non.frontier() {
        assert!(
            cog.frontier().any(|q| q.point.dominates(&p.point, TOL)),
            "{:?} is not covered by the cognitive frontier",
            p.point
        );
    }
}

fn dominated_oracle(points: &[RatePoint]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !points.iter().enumerate().any(|(j, q)| {
                let weakly = q.dominates(&points[i], 0.0);
                let strictly = q.rates.iter().zip(&points[i].rates).any(|(a, b)| a > b);
                weakly && (strictly || j < i)
            })
        })
        .collect()
}

proptest! {
    #[test]
    fn pareto_filter_matches_pairwise_check(raw in prop::collection::vec(prop::collection::vec(0u8..4, 3), 0..40)) {
        let points: Vec<RatePoint> = raw
            .into_iter()
            .map(|r| RatePoint::new(r.into_iter().map(f64::from).collect()))
            .collect();
        let mut got = pareto_indices(&points);
        got.sort_unstable();
        prop_assert_eq!(got, dominated_oracle(&points));
    }
}
