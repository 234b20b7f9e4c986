use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Streaming mean and variance (Welford), mergeable (Chan et al.).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = self.count + other.count;
        let d = other.mean - self.mean;
        let (na, nb) = (self.count as f64, other.count as f64);
        self.mean += d * nb / n as f64;
        self.m2 += other.m2 + d * d * na * nb / n as f64;
        self.count = n;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance; zero below two observations.
    pub fn variance(&self) -> f64 {
        if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }
}

/// Per-cell gradient magnitudes recorded by one backward sweep.
///
/// Indexed `[layer][t]`, layer 0 at the bottom of the stack.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub gh_norm: Vec<Vec<f64>>,
    pub gparam_norm: Vec<Vec<f64>>,
    /// Cosine between the gradient arriving from the layer above and the
    /// one arriving from the next time step; `None` unless both exist and
    /// are nonzero.
    pub path_cosine: Vec<Vec<Option<f64>>>,
}

impl FieldSample {
    pub fn zeros(layers: usize, steps: usize) -> Self {
        FieldSample {
            gh_norm: vec![vec![0.0; steps]; layers],
            gparam_norm: vec![vec![0.0; steps]; layers],
            path_cosine: vec![vec![None; steps]; layers],
        }
    }

    pub fn layers(&self) -> usize {
        self.gh_norm.len()
    }

    pub fn steps(&self) -> usize {
        self.gh_norm.first().map_or(0, Vec::len)
    }
}

/// Monte-Carlo statistics of per-cell gradient magnitudes over an `L x T` lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientField {
    layers: usize,
    steps: usize,
    gparam: Vec<Welford>,
    gh: Vec<Welford>,
    cosine: Vec<Welford>,
}

impl GradientField {
    pub fn new(layers: usize, steps: usize) -> Self {
        GradientField {
            layers,
            steps,
            gparam: vec![Welford::new(); layers * steps],
            gh: vec![Welford::new(); layers * steps],
            cosine: vec![Welford::new(); layers * steps],
        }
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Completed runs.
    pub fn runs(&self) -> u64 {
        self.gh.first().map_or(0, Welford::count)
    }

    fn idx(&self, layer: usize, t: usize) -> usize {
        assert!(layer < self.layers && t < self.steps, "cell ({layer}, {t}) out of range");
        layer * self.steps + t
    }

    pub fn push(&mut self, s: &FieldSample) {
        assert_eq!((s.layers(), s.steps()), (self.layers, self.steps), "sample shape");
        for l in 0..self.layers {
            for t in 0..self.steps {
                let i = l * self.steps + t;
                self.gparam[i].push(s.gparam_norm[l][t]);
                self.gh[i].push(s.gh_norm[l][t]);
                if let Some(c) = s.path_cosine[l][t] {
                    self.cosine[i].push(c);
                }
            }
        }
    }

    pub fn merge(&mut self, other: &GradientField) {
        assert_eq!((self.layers, self.steps), (other.layers, other.steps), "field shape");
        for (a, b) in self.gparam.iter_mut().zip(&other.gparam) {
            a.merge(b);
        }
        for (a, b) in self.gh.iter_mut().zip(&other.gh) {
            a.merge(b);
        }
        for (a, b) in self.cosine.iter_mut().zip(&other.cosine) {
            a.merge(b);
        }
    }

    /// Statistics of the per-cell parameter-gradient norm; `layer` and `t` are 0-based.
    pub fn gparam(&self, layer: usize, t: usize) -> &Welford {
        &self.gparam[self.idx(layer, t)]
    }

    pub fn gh(&self, layer: usize, t: usize) -> &Welford {
        &self.gh[self.idx(layer, t)]
    }

    pub fn path_cosine(&self, layer: usize, t: usize) -> &Welford {
        &self.cosine[self.idx(layer, t)]
    }

    pub fn mean_gparam(&self, layer: usize, t: usize) -> f64 {
        self.gparam(layer, t).mean()
    }

    /// Standard deviation over mean of the parameter-gradient norm, or
    /// `None` where the mean is not positive.
    pub fn normalized_std(&self, layer: usize, t: usize) -> Option<f64> {
        let w = self.gparam(layer, t);
        (w.mean() > 0.0).then(|| w.std_dev() / w.mean())
    }

    /// `L x T` grid of mean parameter-gradient norms, row 0 = bottom layer.
    pub fn mean_gparam_grid(&self) -> Vec<Vec<f64>> {
        (0..self.layers)
            .map(|l| (0..self.steps).map(|t| self.mean_gparam(l, t)).collect())
            .collect()
    }

    pub fn normalized_std_grid(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.layers)
            .map(|l| (0..self.steps).map(|t| self.normalized_std(l, t)).collect())
            .collect()
    }

    /// CSV with header `layer,t,mean_gparam_norm,std_gparam_norm,mean_gh_norm,runs`.
    ///
    /// Layers and steps are 1-based; layer 1 is the bottom of the stack.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,t,mean_gparam_norm,std_gparam_norm,mean_gh_norm,runs\n");
        for l in 0..self.layers {
            for t in 0..self.steps {
                let p = self.gparam(l, t);
                let h = self.gh(l, t);
                let _ = writeln!(
                    s,
                    "{},{},{:e},{:e},{:e},{}",
                    l + 1,
                    t + 1,
                    p.mean(),
                    p.std_dev(),
                    h.mean(),
                    p.count()
                );
            }
        }
        s
    }

    /// CSV of mean-normalized standard deviations; cells with zero mean hold `null`.
    pub fn normalized_std_csv(&self) -> String {
        let mut s = String::from("layer,t,normalized_std_gparam_norm,runs\n");
        for l in 0..self.layers {
            for t in 0..self.steps {
                let v = match self.normalized_std(l, t) {
                    Some(v) => format!("{v:e}"),
                    None => "null".to_string(),
                };
                let _ = writeln!(s, "{},{},{},{}", l + 1, t + 1, v, self.gparam(l, t).count());
            }
        }
        s
    }
}
