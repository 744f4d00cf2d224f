//! First-improvement 2-opt + relocate descent with don't-look bits.
//!
//! 2-opt scans both tour directions of every active city. When the move
//! costs dominate the true distances (plain or penalized distances), the
//! candidate scan walks the full neighbour list sorted by true distance and
//! stops as soon as no improving partner can remain, which keeps the
//! neighbourhood exact. Relocate moves insert a single city next to one of
//! its `k` nearest neighbours; exact descents scan every insertion point.

use std::collections::VecDeque;

use super::Tour;
use crate::matrix::SquareMatrix;

/// A move is applied only if it lowers the cost by more than this.
pub const IMPROVEMENT_EPS: f64 = 1e-10;

pub const RELOCATE_NEIGHBORS: usize = 10;

/// Per-instance neighbour lists on the true distances.
#[derive(Debug, Clone)]
pub struct Neighbors {
    n: usize,
    k: usize,
    sorted: Vec<u32>,
    reverse: Vec<Vec<u32>>,
}

impl Neighbors {
    pub fn new(dist: &SquareMatrix, k: usize) -> Self {
        let n = dist.n();
        let width = n.saturating_sub(1);
        let k = k.min(width);
        let mut sorted = Vec::with_capacity(n * width);
        let mut row: Vec<u32> = Vec::with_capacity(width);
        for a in 0..n {
            row.clear();
            row.extend((0..n as u32).filter(|&c| c as usize != a));
            let r = dist.row(a);
            row.sort_by(|&x, &y| r[x as usize].total_cmp(&r[y as usize]).then(x.cmp(&y)));
            sorted.extend_from_slice(&row);
        }
        let mut reverse = vec![Vec::new(); n];
        for a in 0..n {
            for &c in &sorted[a * width..a * width + k] {
                reverse[c as usize].push(a as u32);
            }
        }
        Self { n, k, sorted, reverse }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// All other cities by ascending distance from `a`.
    pub fn sorted(&self, a: usize) -> &[u32] {
        let w = self.n - 1;
        &self.sorted[a * w..(a + 1) * w]
    }

    pub fn nearest(&self, a: usize) -> &[u32] {
        &self.sorted(a)[..self.k]
    }

    /// Cities whose `k` nearest neighbours include `a`.
    pub fn reverse(&self, a: usize) -> &[u32] {
        &self.reverse[a]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Operators {
    pub two_opt: bool,
    pub relocate: bool,
}

impl Default for Operators {
    fn default() -> Self {
        Self { two_opt: true, relocate: true }
    }
}

pub(crate) trait MoveCost {
    /// Whether `cost(i, j) >= dist(i, j)` holds for all pairs.
    const DOMINATES_DISTANCE: bool;
    fn cost(&self, i: usize, j: usize) -> f64;
}

pub(crate) struct Plain<'a>(pub &'a SquareMatrix);

impl MoveCost for Plain<'_> {
    const DOMINATES_DISTANCE: bool = true;
    #[inline]
    fn cost(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }
}

/// `dist + lambda * penalties` with non-negative penalties and lambda.
pub(crate) struct Penalized<'a> {
    pub dist: &'a SquareMatrix,
    pub penalties: &'a SquareMatrix,
    pub lambda: f64,
}

impl MoveCost for Penalized<'_> {
    const DOMINATES_DISTANCE: bool = true;
    #[inline]
    fn cost(&self, i: usize, j: usize) -> f64 {
        self.dist.get(i, j) + self.lambda * self.penalties.get(i, j)
    }
}

pub(crate) struct Arbitrary<'a>(pub &'a SquareMatrix);

impl MoveCost for Arbitrary<'_> {
    const DOMINATES_DISTANCE: bool = false;
    #[inline]
    fn cost(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }
}

/// Array tour with position index, work queue and touched-city log.
#[derive(Debug, Clone)]
pub struct TourState {
    order: Vec<usize>,
    pos: Vec<usize>,
    queue: VecDeque<usize>,
    queued: Vec<bool>,
    touched: Vec<usize>,
    touched_flag: Vec<bool>,
}

impl TourState {
    pub fn new(order: Vec<usize>) -> Self {
        let n = order.len();
        let mut pos = vec![0; n];
        for (i, &c) in order.iter().enumerate() {
            pos[c] = i;
        }
        Self {
            order,
            pos,
            queue: VecDeque::with_capacity(n),
            queued: vec![false; n],
            touched: Vec::new(),
            touched_flag: vec![false; n],
        }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn set_order(&mut self, order: &[usize]) {
        self.order.copy_from_slice(order);
        for (i, &c) in self.order.iter().enumerate() {
            self.pos[c] = i;
        }
    }

    #[inline]
    fn n(&self) -> usize {
        self.order.len()
    }

    #[inline]
    pub fn succ(&self, a: usize) -> usize {
        let p = self.pos[a] + 1;
        self.order[if p == self.n() { 0 } else { p }]
    }

    #[inline]
    pub fn pred(&self, a: usize) -> usize {
        let p = self.pos[a];
        self.order[if p == 0 { self.n() - 1 } else { p - 1 }]
    }

    pub fn activate(&mut self, a: usize) {
        if !self.queued[a] {
            self.queued[a] = true;
            self.queue.push_back(a);
        }
    }

    pub fn activate_all(&mut self) {
        for a in 0..self.n() {
            self.activate(a);
        }
    }

    fn touch(&mut self, a: usize) {
        self.activate(a);
        if !self.touched_flag[a] {
            self.touched_flag[a] = true;
            self.touched.push(a);
        }
    }

    /// Cities whose tour neighbours changed since the last call.
    pub fn take_touched(&mut self) -> Vec<usize> {
        for &a in &self.touched {
            self.touched_flag[a] = false;
        }
        std::mem::take(&mut self.touched)
    }

    /// Reverses the cyclic segment running forward from position `i` to `j`.
    fn reverse(&mut self, i: usize, j: usize) {
        let n = self.n();
        let mut len = (j + n - i) % n + 1;
        let (mut i, mut j) = (i, j);
        if 2 * len > n {
            (i, j) = ((j + 1) % n, (i + n - 1) % n);
            len = n - len;
        }
        for _ in 0..len / 2 {
            let (a, b) = (self.order[i], self.order[j]);
            self.order[i] = b;
            self.order[j] = a;
            self.pos[b] = i;
            self.pos[a] = j;
            i = if i + 1 == n { 0 } else { i + 1 };
            j = if j == 0 { n - 1 } else { j - 1 };
        }
    }

    /// Moves the forward segment of `len` cities starting at position `ps`
    /// between adjacent cities `u` and `v = succ(u)`, optionally reversed.
    /// Shifts whichever side of the tour between the two spots is shorter.
    fn move_segment(&mut self, ps: usize, len: usize, u: usize, v: usize, reversed: bool) {
        let n = self.n();
        let end = (ps + len - 1) % n;
        let ahead = (self.pos[u] + n - end) % n;
        let behind = (ps + n - self.pos[v]) % n;
        let (start, total) = if ahead <= behind { (ps, len + ahead) } else { (self.pos[v], behind + len) };
        let buf: Vec<usize> = (0..total).map(|k| self.order[(start + k) % n]).collect();
        let (seg, rest): (Vec<usize>, Vec<usize>) = if ahead <= behind {
            (buf[..len].to_vec(), buf[len..].to_vec())
        } else {
            (buf[behind..].to_vec(), buf[..behind].to_vec())
        };
        let mut seg = seg;
        if reversed {
            seg.reverse();
        }
        let new: Vec<usize> = if ahead <= behind { rest.into_iter().chain(seg).collect() } else { seg.into_iter().chain(rest).collect() };
        for (k, c) in new.into_iter().enumerate() {
            let p = (start + k) % n;
            self.order[p] = c;
            self.pos[c] = p;
        }
    }
}

/// Descent engine bound to one instance.
#[derive(Debug, Clone, Copy)]
pub struct LocalSearch<'a> {
    dist: &'a SquareMatrix,
    nb: &'a Neighbors,
    ops: Operators,
}

impl<'a> LocalSearch<'a> {
    pub fn new(dist: &'a SquareMatrix, nb: &'a Neighbors, ops: Operators) -> Self {
        Self { dist, nb, ops }
    }

    /// Descends on the true distances. With `exact`, keeps sweeping every
    /// city until a full sweep finds no improving move.
    pub fn descend(&self, st: &mut TourState, exact: bool) -> usize {
        self.run(st, &Plain(self.dist), exact)
    }

    pub(crate) fn descend_penalized(&self, st: &mut TourState, penalties: &SquareMatrix, lambda: f64) -> usize {
        let cost = Penalized { dist: self.dist, penalties, lambda };
        self.run(st, &cost, false)
    }

    pub(crate) fn descend_arbitrary(&self, st: &mut TourState, working: &SquareMatrix) -> usize {
        self.run(st, &Arbitrary(working), false)
    }

    fn run<C: MoveCost>(&self, st: &mut TourState, cost: &C, exact: bool) -> usize {
        let mut moves = self.drain(st, cost, exact);
        if exact {
            loop {
                st.activate_all();
                let m = self.drain(st, cost, true);
                if m == 0 {
                    break;
                }
                moves += m;
            }
        }
        moves
    }

    fn drain<C: MoveCost>(&self, st: &mut TourState, cost: &C, full: bool) -> usize {
        if st.n() < 4 {
            st.queue.clear();
            st.queued.iter_mut().for_each(|q| *q = false);
            return 0;
        }
        let mut moves = 0;
        while let Some(a) = st.queue.pop_front() {
            st.queued[a] = false;
            if (self.ops.two_opt && (self.two_opt(st, cost, a, true) || self.two_opt(st, cost, a, false)))
                || (self.ops.relocate && st.n() >= 5 && (self.relocate_out(st, cost, a, full) || self.relocate_in(st, cost, a)))
            {
                moves += 1;
            }
        }
        moves
    }

    fn two_opt<C: MoveCost>(&self, st: &mut TourState, cost: &C, a: usize, forward: bool) -> bool {
        let step = |st: &TourState, x: usize| if forward { st.succ(x) } else { st.pred(x) };
        let an = step(st, a);
        let base = cost.cost(a, an);
        let try_partner = |st: &mut TourState, c: usize| -> bool {
            if c == a || c == an {
                return false;
            }
            let cn = step(st, c);
            if cn == a {
                return false;
            }
            let delta = cost.cost(a, c) + cost.cost(an, cn) - base - cost.cost(c, cn);
            if delta < -IMPROVEMENT_EPS {
                if forward {
                    st.reverse(st.pos[an], st.pos[c]);
                } else {
                    st.reverse(st.pos[c], st.pos[an]);
                }
                for x in [a, an, c, cn] {
                    st.touch(x);
                }
                return true;
            }
            false
        };
        if C::DOMINATES_DISTANCE {
            let row = self.dist.row(a);
            for &c in self.nb.sorted(a) {
                let c = c as usize;
                if row[c] >= base {
                    break;
                }
                if try_partner(st, c) {
                    return true;
                }
            }
        } else {
            for c in 0..st.n() {
                if try_partner(st, c) {
                    return true;
                }
            }
        }
        false
    }

    /// Tries to move the segment at forward positions `ps..ps+len` between
    /// `u` and `v = succ(u)`. `a` is the segment end that should become
    /// adjacent to `x`, which is one of `u`, `v`.
    #[allow(clippy::too_many_arguments)]
    fn try_segment<C: MoveCost>(st: &mut TourState, cost: &C, ps: usize, len: usize, a: usize, x: usize, u: usize, v: usize) -> bool {
        let n = st.n();
        let f1 = st.order[ps];
        let fl = st.order[(ps + len - 1) % n];
        let inside = |c: usize| (st.pos[c] + n - ps) % n < len;
        if inside(u) || inside(v) {
            return false;
        }
        let p = st.pred(f1);
        let q = st.succ(fl);
        if u == p && v == q {
            return false;
        }
        // Orientation: `a` lands next to `x`.
        let reversed = (x == u) != (a == f1);
        let (first, last) = if reversed { (fl, f1) } else { (f1, fl) };
        let removal = cost.cost(p, f1) + cost.cost(fl, q) - cost.cost(p, q);
        let delta = cost.cost(u, first) + cost.cost(last, v) - cost.cost(u, v) - removal;
        if delta < -IMPROVEMENT_EPS {
            st.move_segment(ps, len, u, v, reversed);
            for c in [f1, fl, p, q, u, v] {
                st.touch(c);
            }
            return true;
        }
        false
    }

    fn try_near<C: MoveCost>(st: &mut TourState, cost: &C, ps: usize, len: usize, a: usize, x: usize) -> bool {
        let (sx, px) = (st.succ(x), st.pred(x));
        Self::try_segment(st, cost, ps, len, a, x, x, sx) || Self::try_segment(st, cost, ps, len, a, x, px, x)
    }

    /// Moves `a` next to one of its nearest neighbours, or anywhere if `full`.
    fn relocate_out<C: MoveCost>(&self, st: &mut TourState, cost: &C, a: usize, full: bool) -> bool {
        if full {
            for u in 0..st.n() {
                let v = st.succ(u);
                if Self::try_segment(st, cost, st.pos[a], 1, a, u, u, v) {
                    return true;
                }
            }
            return false;
        }
        for &x in self.nb.nearest(a) {
            if Self::try_near(st, cost, st.pos[a], 1, a, x as usize) {
                return true;
            }
        }
        false
    }

    /// Moves a single city that lists `x` among its nearest neighbours next
    /// to `x`.
    fn relocate_in<C: MoveCost>(&self, st: &mut TourState, cost: &C, x: usize) -> bool {
        for &a in self.nb.reverse(x) {
            let a = a as usize;
            if Self::try_near(st, cost, st.pos[a], 1, a, x) {
                return true;
            }
        }
        false
    }
}

/// Descends from `order` to a local optimum of `matrix` (symmetrized first
/// if needed) under the given operators.
pub fn local_search(order: &[usize], matrix: &SquareMatrix, ops: Operators) -> Tour {
    let sym;
    let m = if matrix.is_symmetric() {
        matrix
    } else {
        sym = matrix.symmetrized();
        &sym
    };
    let nb = Neighbors::new(m, RELOCATE_NEIGHBORS);
    let ls = LocalSearch::new(m, &nb, ops);
    let mut st = TourState::new(order.to_vec());
    st.activate_all();
    ls.descend(&mut st, true);
    Tour::new(st.order, m)
}
