use super::ObjectivePoint;

/// `a` is no worse than `b` in both objectives and strictly better in one.
pub fn dominates(a: &ObjectivePoint, b: &ObjectivePoint) -> bool {
    a.score <= b.score && a.bits <= b.bits && (a.score < b.score || a.bits < b.bits)
}

/// Fast non-dominated sort. Every index appears in exactly one front, and
/// each front lists its indices in ascending (input) order.
pub fn non_dominated_sort(points: &[ObjectivePoint]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in i + 1..n {
            if dominates(&points[i], &points[j]) {
                dominated_by[i].push(j);
                domination_count[j] += 1;
            } else if dominates(&points[j], &points[i]) {
                dominated_by[j].push(i);
                domination_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Indices of the non-dominated points, ascending. Same set as the first
/// front of [`non_dominated_sort`] in `O(n log n)`.
pub fn pareto_indices(points: &[ObjectivePoint]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .bits
            .total_cmp(&points[b].bits)
            .then(points[a].score.total_cmp(&points[b].score))
    });
    let mut front = Vec::new();
    // Lowest score among points with strictly fewer bits than the current group.
    let mut best_before = f64::INFINITY;
    let mut k = 0;
    while k < order.len() {
        let bits = points[order[k]].bits;
        let group_min = points[order[k]].score;
        let mut end = k;
        while end < order.len() && points[order[end]].bits == bits {
            end += 1;
        }
        if group_min < best_before {
            front.extend(
                order[k..end]
                    .iter()
                    .copied()
                    .filter(|&i| points[i].score == group_min),
            );
            best_before = group_min;
        }
        k = end;
    }
    front.sort_unstable();
    front
}

/// Crowding distance of each point within one front. Boundary points of
/// either objective get `+∞`; a zero-range objective contributes nothing.
pub fn crowding_distance(front: &[ObjectivePoint]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let mut distance = vec![0.0; n];
    let objectives: [fn(&ObjectivePoint) -> f64; 2] = [|p| p.score, |p| p.bits];
    for value in objectives {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| value(&front[a]).total_cmp(&value(&front[b])));
        let lo = value(&front[order[0]]);
        let hi = value(&front[order[n - 1]]);
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for k in 1..n - 1 {
            let gap = value(&front[order[k + 1]]) - value(&front[order[k - 1]]);
            distance[order[k]] += gap / range;
        }
    }
    distance
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<ObjectivePoint> {
        v.iter().map(|&(s, b)| ObjectivePoint::new(s, b)).collect()
    }

    #[test]
    fn dominance_examples() {
        let p = pts(&[(1.0, 3.0), (2.0, 4.0), (1.0, 4.0), (2.0, 3.0)]);
        assert!(dominates(&p[0], &p[1]));
        assert!(!dominates(&p[2], &p[3]));
        assert!(!dominates(&p[3], &p[2]));
        assert!(!dominates(&p[3], &p[3]));
    }

    #[test]
    fn sort_examples() {
        let p = pts(&[(1.0, 4.0), (2.0, 3.0), (3.0, 2.0), (2.0, 5.0)]);
        assert_eq!(non_dominated_sort(&p), vec![vec![0, 1, 2], vec![3]]);

        let same = pts(&[(1.0, 1.0); 4]);
        assert_eq!(non_dominated_sort(&same), vec![vec![0, 1, 2, 3]]);

        let chain = pts(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]);
        assert_eq!(non_dominated_sort(&chain), vec![vec![0], vec![1], vec![2]]);

        assert!(non_dominated_sort(&[]).is_empty());
    }

    #[test]
    fn pareto_indices_handles_ties() {
        let p = pts(&[(0.3, 2.5), (0.1, 3.0), (0.2, 2.5), (0.2, 2.5), (0.1, 3.5)]);
        assert_eq!(pareto_indices(&p), vec![1, 2, 3]);
    }

    #[test]
    fn crowding_examples() {
        assert_eq!(
            crowding_distance(&pts(&[(1.0, 2.0), (2.0, 1.0)])),
            vec![f64::INFINITY; 2]
        );
        // Five evenly spaced points on s + b = 4: every interior point gets
        // 2/4 from each objective.
        let line = pts(&[(0.0, 4.0), (1.0, 3.0), (2.0, 2.0), (3.0, 1.0), (4.0, 0.0)]);
        let d = crowding_distance(&line);
        assert!(d[0].is_infinite() && d[4].is_infinite());
        for v in &d[1..4] {
            assert!((v - 1.0).abs() < 1e-15);
        }
        // Zero bit range: only the score objective contributes.
        let flat = pts(&[(0.0, 3.0), (1.0, 3.0), (3.0, 3.0), (4.0, 3.0)]);
        let d = crowding_distance(&flat);
        assert!(d.iter().all(|v| !v.is_nan()));
        assert!((d[1] - 0.75).abs() < 1e-15);
        assert!((d[2] - 0.75).abs() < 1e-15);
    }
}
