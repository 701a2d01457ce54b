use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid `t_start = t_0 < ... < t_N = t_end`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidInput("time grid needs at least one step".into()));
        }
        if !(t_start.is_finite() && t_end.is_finite()) || t_end <= t_start {
            return Err(Error::InvalidInput(format!(
                "time grid needs t_start < t_end, got [{t_start}, {t_end}]"
            )));
        }
        Ok(TimeGrid { t_start, t_end, steps })
    }

    /// Grid with spacing `dt`; `dt` must divide the interval.
    pub fn with_dt(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        let ratio = (t_end - t_start) / dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "dt = {dt} does not divide [{t_start}, {t_end}]"
            )));
        }
        TimeGrid::new(t_start, t_end, steps as usize)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.t_end
        } else {
            self.t_start + i as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.time(i)).collect()
    }

    /// Index of grid point `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let r = (t - self.t_start) / self.dt();
        let i = r.round();
        if i < 0.0 || i > self.steps as f64 || (r - i).abs() > 1e-7 {
            None
        } else {
            Some(i as usize)
        }
    }

    /// Coarser grid with `factor` fine steps per coarse step.
    pub fn coarsen(&self, factor: usize) -> Result<TimeGrid> {
        if factor == 0 || !self.steps.is_multiple_of(factor) {
            return Err(Error::InvalidInput(format!(
                "coarsening factor {factor} does not divide {} steps",
                self.steps
            )));
        }
        TimeGrid::new(self.t_start, self.t_end, self.steps / factor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_basics() {
        let g = TimeGrid::with_dt(0.0, 1.0, 0.01).unwrap();
        assert_eq!(g.steps(), 100);
        assert_eq!(g.time(100), 1.0);
        assert_eq!(g.index_of(0.5), Some(50));
        assert_eq!(g.index_of(0.505), None);
        assert!(TimeGrid::with_dt(0.0, 1.0, 0.3).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        assert_eq!(g.coarsen(10).unwrap().steps(), 10);
    }
}
