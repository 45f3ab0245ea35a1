use crate::error::{Error, Result};

/// One recorded sample of the two-oscillator loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
    pub v1: f64,
    pub v2: f64,
    /// Control (damping ratio of the second oscillator) in effect at `t`.
    pub u: f64,
    /// Acceleration of the second oscillator at `t`.
    pub f2: f64,
    /// Increment `u_{k+1} − u_k` computed at `t`.
    pub du: f64,
}

/// Column-oriented time history, one entry per recorded sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub u: Vec<f64>,
    pub f2: Vec<f64>,
    pub du: Vec<f64>,
}

pub const COLUMNS: [&str; 8] = ["t", "x1", "x2", "v1", "v2", "u", "f2", "du"];

impl Trajectory {
    pub fn with_capacity(n: usize) -> Self {
        let col = || Vec::with_capacity(n);
        Self {
            t: col(),
            x1: col(),
            x2: col(),
            v1: col(),
            v2: col(),
            u: col(),
            f2: col(),
            du: col(),
        }
    }

    pub fn push(&mut self, r: TrajectoryRow) {
        self.t.push(r.t);
        self.x1.push(r.x1);
        self.x2.push(r.x2);
        self.v1.push(r.v1);
        self.v2.push(r.v2);
        self.u.push(r.u);
        self.f2.push(r.f2);
        self.du.push(r.du);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn row(&self, i: usize) -> TrajectoryRow {
        TrajectoryRow {
            t: self.t[i],
            x1: self.x1[i],
            x2: self.x2[i],
            v1: self.v1[i],
            v2: self.v2[i],
            u: self.u[i],
            f2: self.f2[i],
            du: self.du[i],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = TrajectoryRow> + '_ {
        (0..self.len()).map(|i| self.row(i))
    }

    /// Every `stride`-th sample starting from the first.
    pub fn strided(&self, stride: usize) -> Trajectory {
        let stride = stride.max(1);
        let mut out = Trajectory::with_capacity(self.len() / stride + 1);
        for i in (0..self.len()).step_by(stride) {
            out.push(self.row(i));
        }
        out
    }

    /// Spacing between the first two samples.
    pub fn sample_interval(&self) -> Option<f64> {
        (self.len() >= 2).then(|| self.t[1] - self.t[0])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let lengths = [
            self.x1.len(),
            self.x2.len(),
            self.v1.len(),
            self.v2.len(),
            self.u.len(),
            self.f2.len(),
            self.du.len(),
        ];
        if lengths.iter().any(|&l| l != n) {
            return Err(Error::config("trajectory columns have unequal lengths"));
        }
        if self.t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("trajectory time column is not strictly increasing"));
        }
        Ok(())
    }
}
