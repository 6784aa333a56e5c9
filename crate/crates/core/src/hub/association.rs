use crate::grid::Position;
use crate::radar::TargetEstimate;

/// Largest centroid-to-pose distance accepted as the same vehicle.
pub const ASSOCIATION_GATE_M: f64 = 0.3;

/// Greedy nearest-pair matching of radar targets to vehicle poses.
///
/// Candidate pairs inside the gate are taken in order of distance (ties by
/// target index, then vehicle id); each target and each vehicle is used at
/// most once. Unmatched targets map to `None`.
pub fn associate(targets: &[TargetEstimate], vehicles: &[(u32, Position)]) -> Vec<Option<u32>> {
    let mut pairs: Vec<(f64, usize, u32)> = Vec::new();
    for (ti, t) in targets.iter().enumerate() {
        for &(vid, pos) in vehicles {
            let d = t.centroid.distance(pos);
            if d <= ASSOCIATION_GATE_M {
                pairs.push((d, ti, vid));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![None; targets.len()];
    let mut used: Vec<u32> = Vec::new();
    for (_, ti, vid) in pairs {
        if out[ti].is_none() && !used.contains(&vid) {
            out[ti] = Some(vid);
            used.push(vid);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn target(x: f64, y: f64) -> TargetEstimate {
        TargetEstimate { centroid: Position::new(x, y), angle_deg: 0.0, distance_m: 0.0, sample_count: 1 }
    }

    /// Exhaustive min-sum matching over all injective target→vehicle maps
    /// restricted to gated pairs, maximising the match count first.
    fn brute_force(targets: &[TargetEstimate], vehicles: &[(u32, Position)]) -> Vec<Option<u32>> {
        fn go(
            i: usize,
            targets: &[TargetEstimate],
            vehicles: &[(u32, Position)],
            used: &mut Vec<bool>,
            cur: &mut Vec<Option<u32>>,
            best: &mut Option<(usize, f64, Vec<Option<u32>>)>,
        ) {
            if i == targets.len() {
                let count = cur.iter().filter(|m| m.is_some()).count();
                let cost: f64 = cur
                    .iter()
                    .enumerate()
                    .filter_map(|(ti, m)| {
                        m.map(|v| targets[ti].centroid.distance(vehicles.iter().find(|p| p.0 == v).unwrap().1))
                    })
                    .sum();
                let better = match best {
                    None => true,
                    Some((bc, bcost, _)) => count > *bc || (count == *bc && cost < *bcost - 1e-12),
                };
                if better {
                    *best = Some((count, cost, cur.clone()));
                }
                return;
            }
            cur.push(None);
            go(i + 1, targets, vehicles, used, cur, best);
            cur.pop();
            for (vi, &(vid, pos)) in vehicles.iter().enumerate() {
                if !used[vi] && targets[i].centroid.distance(pos) <= ASSOCIATION_GATE_M {
                    used[vi] = true;
                    cur.push(Some(vid));
                    go(i + 1, targets, vehicles, used, cur, best);
                    cur.pop();
                    used[vi] = false;
                }
            }
        }
        let mut best = None;
        go(0, targets, vehicles, &mut vec![false; vehicles.len()], &mut Vec::new(), &mut best);
        best.map(|b| b.2).unwrap_or_default()
    }

    #[test]
    fn exact_pose_matches() {
        let v = [(4, Position::new(0.5, 0.5))];
        assert_eq!(associate(&[target(0.5, 0.5)], &v), vec![Some(4)]);
    }

    #[test]
    fn far_target_is_unmatched() {
        let v = [(0, Position::new(0.0, 0.0)), (1, Position::new(2.0, 0.0))];
        assert_eq!(associate(&[target(1.0, 0.0)], &v), vec![None]);
    }

    #[test]
    fn two_targets_two_vehicles() {
        let v = [(0, Position::new(0.25, 0.25)), (1, Position::new(1.75, 1.75))];
        let t = [target(1.70, 1.80), target(0.30, 0.20)];
        let got = associate(&t, &v);
        assert_eq!(got, vec![Some(1), Some(0)]);
        assert_eq!(got, brute_force(&t, &v));
    }

    #[test]
    fn one_vehicle_never_takes_two_targets() {
        let v = [(7, Position::new(1.0, 1.0))];
        assert_eq!(associate(&[target(1.05, 1.0), target(0.9, 1.0)], &v), vec![Some(7), None]);
    }

    proptest! {
        #[test]
        fn separated_geometry_agrees_with_brute_force(
            slots in proptest::sample::subsequence((0..16usize).collect::<Vec<_>>(), 1..=4),
            jitter in proptest::collection::vec((-0.1f64..0.1, -0.1f64..0.1), 4),
            drop in 0usize..4,
        ) {
            // vehicles on a 0.5 m lattice, targets within 0.15 m of their vehicle
            let vehicles: Vec<(u32, Position)> = slots
                .iter()
                .map(|&s| (s as u32, Position::new((s % 4) as f64 * 0.5, (s / 4) as f64 * 0.5)))
                .collect();
            let targets: Vec<TargetEstimate> = vehicles
                .iter()
                .zip(&jitter)
                .skip(drop.min(vehicles.len() - 1))
                .map(|((_, p), (dx, dy))| target(p.x + dx, p.y + dy))
                .collect();
            let got = associate(&targets, &vehicles);
            prop_assert_eq!(&got, &brute_force(&targets, &vehicles));
            let mut ids: Vec<u32> = got.iter().flatten().copied().collect();
            let n = ids.len();
            ids.sort_unstable();
            ids.dedup();
            prop_assert_eq!(ids.len(), n);
        }
    }
}
