//! Test oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

/// Exhaustive finite-horizon dynamic program over the GridHarvest rules,
/// written from the rule table alone (it does not call into the environment).
///
/// Action indices follow the environment's encoding: moves
/// `[up, down, left, right, stay]`, modes `[harvest, build, idle]`.
pub struct GridOracle {
    size: usize,
    depot: (usize, usize),
    resources: Vec<(usize, usize)>,
    build_requirement: usize,
    max_steps: usize,
    /// `values[k][cell][mask]`: best return with `k` steps left.
    values: Vec<Vec<Vec<f64>>>,
}

const MOVES: [(i64, i64); 5] = [(-1, 0), (1, 0), (0, -1), (0, 1), (0, 0)];

impl GridOracle {
    pub fn new(
        size: usize,
        depot: (usize, usize),
        resources: Vec<(usize, usize)>,
        build_requirement: usize,
        max_steps: usize,
    ) -> Self {
        let mut oracle = Self {
            size,
            depot,
            resources,
            build_requirement,
            max_steps,
            values: Vec::new(),
        };
        let cells = size * size;
        let masks = 1usize << oracle.resources.len();
        oracle.values.push(vec![vec![0.0; masks]; cells]);
        for k in 1..=max_steps {
            let mut layer = vec![vec![f64::NEG_INFINITY; masks]; cells];
            for cell in 0..cells {
                for mask in 0..masks {
                    for a in 0..15 {
                        let (r, next, end) = oracle.transition(cell, mask, a);
                        let tail = if end { 0.0 } else { oracle.values[k - 1][next.0][next.1] };
                        layer[cell][mask] = layer[cell][mask].max(r + tail);
                    }
                }
            }
            oracle.values.push(layer);
        }
        oracle
    }

    /// `(reward, (cell, mask), episode_ended_by_build)`; bit `i` of `mask`
    /// set means resource `i` is still present.
    fn transition(&self, cell: usize, mask: usize, action: usize) -> (f64, (usize, usize), bool) {
        let (mv, mode) = (action / 3, action % 3);
        let n = self.size as i64;
        let (r, c) = ((cell / self.size) as i64, (cell % self.size) as i64);
        let (dr, dc) = MOVES[mv];
        let (nr, nc) = (r + dr, c + dc);
        let (r, c) = if (0..n).contains(&nr) && (0..n).contains(&nc) { (nr, nc) } else { (r, c) };
        let pos = (r as usize, c as usize);
        let next_cell = pos.0 * self.size + pos.1;
        let mut reward = -0.01;
        let mut mask = mask;
        let mut built = false;
        match mode {
            0 => {
                if let Some(i) = self.resources.iter().position(|&p| p == pos) {
                    if mask & (1 << i) != 0 {
                        mask &= !(1 << i);
                        reward += 1.0;
                    }
                }
            }
            1 => {
                let harvested = self.resources.len() - mask.count_ones() as usize;
                if pos == self.depot && harvested >= self.build_requirement {
                    reward += 5.0;
                    built = true;
                }
            }
            _ => {}
        }
        (reward, (next_cell, mask), built)
    }

    fn full_mask(&self) -> usize {
        (1 << self.resources.len()) - 1
    }

    pub fn optimal_return(&self, start: (usize, usize)) -> f64 {
        self.values[self.max_steps][start.0 * self.size + start.1][self.full_mask()]
    }

    /// Best return over all start cells.
    pub fn upper_bound(&self) -> f64 {
        (0..self.size * self.size)
            .map(|c| self.values[self.max_steps][c][self.full_mask()])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Optimal return averaged over a uniformly drawn start cell.
    pub fn expected_optimal(&self) -> f64 {
        let cells = self.size * self.size;
        (0..cells).map(|c| self.values[self.max_steps][c][self.full_mask()]).sum::<f64>() / cells as f64
    }

    /// One optimal `(move, mode)` sequence from `start`.
    pub fn optimal_actions(&self, start: (usize, usize)) -> Vec<(usize, usize)> {
        let mut cell = start.0 * self.size + start.1;
        let mut mask = self.full_mask();
        let mut out = Vec::new();
        for k in (1..=self.max_steps).rev() {
            let target = self.values[k][cell][mask];
            let a = (0..15)
                .find(|&a| {
                    let (r, next, end) = self.transition(cell, mask, a);
                    let tail = if end { 0.0 } else { self.values[k - 1][next.0][next.1] };
                    (r + tail - target).abs() < 1e-9
                })
                .expect("some action attains the optimum");
            out.push((a / 3, a % 3));
            let (_, next, end) = self.transition(cell, mask, a);
            if end {
                break;
            }
            (cell, mask) = next;
        }
        out
    }
}

/// `Â_t = Σ_k (γλ)^k δ_{t+k}` summed directly, stopping after a terminal step.
pub fn brute_force_gae(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64, lam: f64) -> Vec<f64> {
    let n = rewards.len();
    let value_at = |t: usize| if t < n { values[t] } else { bootstrap };
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            let mut weight = 1.0;
            for k in t..n {
                let next = if dones[k] { 0.0 } else { gamma * value_at(k + 1) };
                total += weight * (rewards[k] + next - values[k]);
                if dones[k] {
                    break;
                }
                weight *= gamma * lam;
            }
            total
        })
        .collect()
}
