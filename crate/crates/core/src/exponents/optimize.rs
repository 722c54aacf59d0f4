//! Local minimization over a product of probability simplices.

/// A point is a flat vector split into consecutive blocks, each constrained to the
/// simplex `{v_i >= floor, sum v_i = 1}`. Blocks of length one are fixed at 1.
#[derive(Clone, Debug)]
pub(crate) struct Blocks {
    pub offsets: Vec<usize>,
    pub lens: Vec<usize>,
}

impl Blocks {
    pub fn new(lens: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(lens.len());
        let mut acc = 0;
        for &l in &lens {
            offsets.push(acc);
            acc += l;
        }
        Self { offsets, lens }
    }

    fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.offsets.iter().zip(&self.lens).map(|(&o, &l)| o..o + l)
    }

    pub fn project(&self, x: &mut [f64], floor: f64) {
        for r in self.ranges() {
            project_simplex(&mut x[r], floor);
        }
    }
}

/// Euclidean projection onto `{v_i >= floor, sum v_i = 1}`.
pub(crate) fn project_simplex(v: &mut [f64], floor: f64) {
    let k = v.len();
    if k == 0 {
        return;
    }
    if k == 1 {
        v[0] = 1.0;
        return;
    }
    let floor = floor.min(1.0 / k as f64);
    let mass = 1.0 - floor * k as f64;
    let mut u: Vec<f64> = v.iter().map(|x| x - floor).collect();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - mass) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - floor - theta).max(0.0) + floor;
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LocalConfig {
    pub floor: f64,
    pub max_iter: usize,
    /// Initial pattern-search step; the search stops below `min_step`.
    pub pattern_step: f64,
    pub min_step: f64,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self { floor: 1e-9, max_iter: 400, pattern_step: 1e-2, min_step: 1e-11 }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LocalMin {
    pub x: Vec<f64>,
    pub value: f64,
}

const FD_STEP: f64 = 1e-7;

fn tangent_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], fx: f64, blocks: &Blocks) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for (&o, &l) in blocks.offsets.iter().zip(&blocks.lens) {
        if l < 2 {
            continue;
        }
        for i in o..o + l {
            let h = FD_STEP;
            probe[i] = x[i] + h;
            let up = f(&probe);
            let d = if x[i] > h {
                probe[i] = x[i] - h;
                (up - f(&probe)) / (2.0 * h)
            } else {
                (up - fx) / h
            };
            probe[i] = x[i];
            g[i] = if d.is_finite() { d } else { 0.0 };
        }
        let mean = g[o..o + l].iter().sum::<f64>() / l as f64;
        for gi in &mut g[o..o + l] {
            *gi -= mean;
        }
    }
    g
}

/// Projected gradient descent with Armijo backtracking, then a pairwise
/// mass-transfer pattern search to settle on kinks of the objective.
pub(crate) fn minimize<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], blocks: &Blocks, cfg: &LocalConfig) -> LocalMin {
    let mut x = x0.to_vec();
    blocks.project(&mut x, cfg.floor);
    let mut fx = f(&x);
    let mut iterations = 0;
    if !fx.is_finite() {
        return LocalMin { x, value: fx };
    }
    let mut t: f64 = 0.1;
    let mut stalls = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let g = tangent_gradient(f, &x, fx, blocks);
        if g.iter().all(|v| v.abs() < 1e-14) {
            break;
        }
        let mut accepted = None;
        let mut step = (t * 4.0).min(10.0);
        while step > 1e-14 {
            let mut y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            blocks.project(&mut y, cfg.floor);
            let fy = f(&y);
            let decrease: f64 = g.iter().zip(x.iter().zip(&y)).map(|(gi, (a, b))| gi * (a - b)).sum();
            if fy.is_finite() && fy <= fx - 1e-4 * decrease.max(0.0) && fy < fx {
                accepted = Some((y, fy));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((y, fy)) => {
                let gain = fx - fy;
                x = y;
                fx = fy;
                t = step;
                if gain < 1e-15 * (1.0 + fx.abs()) {
                    stalls += 1;
                    if stalls >= 3 {
                        break;
                    }
                } else {
                    stalls = 0;
                }
            }
            None => break,
        }
    }
    let (x, fx) = pattern_search(f, x, fx, blocks, cfg);
    LocalMin { x, value: fx }
}

/// Moves mass between pairs of coordinates in each block, halving the step on failure.
pub(crate) fn pattern_search<F: Fn(&[f64]) -> f64>(
    f: &F,
    mut x: Vec<f64>,
    mut fx: f64,
    blocks: &Blocks,
    cfg: &LocalConfig,
) -> (Vec<f64>, f64) {
    let mut step = cfg.pattern_step;
    let mut rounds = 0;
    while step >= cfg.min_step && rounds < 10_000 {
        rounds += 1;
        let mut improved = false;
        for (&o, &l) in blocks.offsets.iter().zip(&blocks.lens) {
            for i in o..o + l {
                for j in o..o + l {
                    if i == j {
                        continue;
                    }
                    let s = step.min(x[i] - cfg.floor);
                    if s <= 0.0 {
                        continue;
                    }
                    let (xi, xj) = (x[i], x[j]);
                    x[i] -= s;
                    x[j] += s;
                    let fy = f(&x);
                    if fy < fx {
                        fx = fy;
                        improved = true;
                    } else {
                        x[i] = xi;
                        x[j] = xj;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// Maximization counterpart of [`pattern_search`] used for kernels in the max step.
pub(crate) fn pattern_search_max<F: Fn(&[f64]) -> f64>(
    f: &F,
    x: Vec<f64>,
    fx: f64,
    blocks: &Blocks,
    cfg: &LocalConfig,
) -> (Vec<f64>, f64) {
    let neg = |v: &[f64]| -f(v);
    let (x, v) = pattern_search(&neg, x, -fx, blocks, cfg);
    (x, -v)
}
