use super::{distance_matrix, InstanceError, TspInstance};

pub const HELD_KARP_MAX_CITIES: usize = 15;

/// Optimal tour by bitmask dynamic programming over subsets of cities
/// `1..n`, with city 0 fixed as the start. Returns the tour starting at 0 and
/// its length.
pub fn held_karp_optimal(inst: &TspInstance) -> Result<(Vec<usize>, f64), InstanceError> {
    let n = inst.n();
    if n > HELD_KARP_MAX_CITIES {
        return Err(InstanceError::TooLarge { n, max: HELD_KARP_MAX_CITIES });
    }
    let d = distance_matrix(inst);
    if n <= 3 {
        let order: Vec<usize> = (0..n).collect();
        let len = (0..n).map(|i| d.get(order[i], order[(i + 1) % n])).sum();
        return Ok((order, len));
    }

    // City k in 1..n is bit k-1; cost[mask][k-1] is the shortest path from 0
    // through exactly `mask`, ending at k.
    let m = n - 1;
    let full = 1usize << m;
    let mut cost = vec![f64::INFINITY; full * m];
    let mut parent = vec![u8::MAX; full * m];
    for k in 0..m {
        cost[(1 << k) * m + k] = d.get(0, k + 1);
    }
    for mask in 1..full {
        for last in 0..m {
            if mask & (1 << last) == 0 {
                continue;
            }
            let here = cost[mask * m + last];
            if !here.is_finite() {
                continue;
            }
            for next in 0..m {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let nmask = mask | (1 << next);
                let cand = here + d.get(last + 1, next + 1);
                let slot = nmask * m + next;
                if cand < cost[slot] {
                    cost[slot] = cand;
                    parent[slot] = last as u8;
                }
            }
        }
    }

    let all = full - 1;
    let (mut last, best) = (0..m)
        .map(|k| (k, cost[all * m + k] + d.get(k + 1, 0)))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    let mut rev = Vec::with_capacity(n);
    let mut mask = all;
    loop {
        rev.push(last + 1);
        let p = parent[mask * m + last];
        mask &= !(1 << last);
        if p == u8::MAX {
            break;
        }
        last = p as usize;
    }
    rev.push(0);
    rev.reverse();
    Ok((rev, best))
}
