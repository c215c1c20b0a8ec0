//! Segment trees used by the charging solver.

/// Range add, range max with the latest index among ties.
pub(crate) struct MaxTree {
    n: usize,
    max: Vec<f64>,
    arg: Vec<usize>,
    lazy: Vec<f64>,
}

impl MaxTree {
    pub fn new(n: usize, init: f64) -> Self {
        let mut t = MaxTree {
            n,
            max: vec![init; 4 * n.max(1)],
            arg: vec![0; 4 * n.max(1)],
            lazy: vec![0.0; 4 * n.max(1)],
        };
        t.build(1, 0, n - 1);
        t
    }

    fn build(&mut self, node: usize, l: usize, r: usize) {
        if l == r {
            self.arg[node] = l;
            return;
        }
        let m = (l + r) / 2;
        self.build(2 * node, l, m);
        self.build(2 * node + 1, m + 1, r);
        self.pull(node);
    }

    fn pull(&mut self, node: usize) {
        let (a, b) = (2 * node, 2 * node + 1);
        if self.max[b] >= self.max[a] {
            self.max[node] = self.max[b];
            self.arg[node] = self.arg[b];
        } else {
            self.max[node] = self.max[a];
            self.arg[node] = self.arg[a];
        }
    }

    fn apply(&mut self, node: usize, v: f64) {
        self.max[node] += v;
        self.lazy[node] += v;
    }

    fn push(&mut self, node: usize) {
        let v = self.lazy[node];
        if v != 0.0 {
            self.apply(2 * node, v);
            self.apply(2 * node + 1, v);
            self.lazy[node] = 0.0;
        }
    }

    /// Adds `v` on `[ql, qr]`.
    pub fn add(&mut self, ql: usize, qr: usize, v: f64) {
        if ql <= qr {
            self.add_rec(1, 0, self.n - 1, ql, qr, v);
        }
    }

    fn add_rec(&mut self, node: usize, l: usize, r: usize, ql: usize, qr: usize, v: f64) {
        if qr < l || r < ql {
            return;
        }
        if ql <= l && r <= qr {
            self.apply(node, v);
            return;
        }
        self.push(node);
        let m = (l + r) / 2;
        self.add_rec(2 * node, l, m, ql, qr, v);
        self.add_rec(2 * node + 1, m + 1, r, ql, qr, v);
        self.pull(node);
    }

    pub fn set(&mut self, i: usize, v: f64) {
        self.set_rec(1, 0, self.n - 1, i, v);
    }

    fn set_rec(&mut self, node: usize, l: usize, r: usize, i: usize, v: f64) {
        if l == r {
            self.max[node] = v;
            self.lazy[node] = 0.0;
            return;
        }
        self.push(node);
        let m = (l + r) / 2;
        if i <= m {
            self.set_rec(2 * node, l, m, i, v);
        } else {
            self.set_rec(2 * node + 1, m + 1, r, i, v);
        }
        self.pull(node);
    }

    pub fn get(&mut self, i: usize) -> f64 {
        self.max_arg(i, i).0
    }

    /// Max over `[ql, qr]` and its latest position.
    pub fn max_arg(&mut self, ql: usize, qr: usize) -> (f64, usize) {
        self.query(1, 0, self.n - 1, ql, qr)
            .unwrap_or((f64::NEG_INFINITY, ql))
    }

    fn query(&mut self, node: usize, l: usize, r: usize, ql: usize, qr: usize) -> Option<(f64, usize)> {
        if qr < l || r < ql {
            return None;
        }
        if ql <= l && r <= qr {
            return Some((self.max[node], self.arg[node]));
        }
        self.push(node);
        let m = (l + r) / 2;
        let a = self.query(2 * node, l, m, ql, qr);
        let b = self.query(2 * node + 1, m + 1, r, ql, qr);
        match (a, b) {
            (Some(a), Some(b)) => Some(if b.0 >= a.0 { b } else { a }),
            (a, b) => a.or(b),
        }
    }
}

/// Cheapest enabled position on a range, latest among equal prices.
pub(crate) struct CheapestTree {
    n: usize,
    best: Vec<(f64, usize)>,
}

impl CheapestTree {
    pub fn new(prices: &[f64]) -> Self {
        let n = prices.len();
        let mut t = CheapestTree {
            n,
            best: vec![(f64::INFINITY, 0); 4 * n.max(1)],
        };
        t.build(1, 0, n - 1, prices);
        t
    }

    fn better(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
        if b.0 < a.0 || (b.0 == a.0 && b.1 > a.1) {
            b
        } else {
            a
        }
    }

    fn build(&mut self, node: usize, l: usize, r: usize, prices: &[f64]) {
        if l == r {
            self.best[node] = (prices[l], l);
            return;
        }
        let m = (l + r) / 2;
        self.build(2 * node, l, m, prices);
        self.build(2 * node + 1, m + 1, r, prices);
        self.best[node] = Self::better(self.best[2 * node], self.best[2 * node + 1]);
    }

    pub fn disable(&mut self, i: usize) {
        self.disable_rec(1, 0, self.n - 1, i);
    }

    fn disable_rec(&mut self, node: usize, l: usize, r: usize, i: usize) {
        if l == r {
            self.best[node] = (f64::INFINITY, l);
            return;
        }
        let m = (l + r) / 2;
        if i <= m {
            self.disable_rec(2 * node, l, m, i);
        } else {
            self.disable_rec(2 * node + 1, m + 1, r, i);
        }
        self.best[node] = Self::better(self.best[2 * node], self.best[2 * node + 1]);
    }

    /// `None` when every position in `[ql, qr]` is disabled.
    pub fn query(&self, ql: usize, qr: usize) -> Option<(f64, usize)> {
        self.query_rec(1, 0, self.n - 1, ql, qr)
            .filter(|(p, _)| p.is_finite())
    }

    fn query_rec(&self, node: usize, l: usize, r: usize, ql: usize, qr: usize) -> Option<(f64, usize)> {
        if qr < l || r < ql {
            return None;
        }
        if ql <= l && r <= qr {
            return Some(self.best[node]);
        }
        let m = (l + r) / 2;
        let a = self.query_rec(2 * node, l, m, ql, qr);
        let b = self.query_rec(2 * node + 1, m + 1, r, ql, qr);
        match (a, b) {
            (Some(a), Some(b)) => Some(Self::better(a, b)),
            (a, b) => a.or(b),
        }
    }
}
