use std::f64::consts::PI;

/// Quintic spline with smoothing length `h` and support radius `3h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuinticKernel {
    pub h: f64,
}

impl QuinticKernel {
    pub fn new(h: f64) -> Self {
        Self { h }
    }

    pub fn support(&self) -> f64 {
        3.0 * self.h
    }

    fn sigma(&self) -> f64 {
        1.0 / (120.0 * PI * self.h.powi(3))
    }

    pub fn w(&self, r: f64) -> f64 {
        let q = r / self.h;
        if q >= 3.0 {
            return 0.0;
        }
        let mut s = (3.0 - q).powi(5);
        if q < 2.0 {
            s -= 6.0 * (2.0 - q).powi(5);
        }
        if q < 1.0 {
            s += 15.0 * (1.0 - q).powi(5);
        }
        self.sigma() * s
    }

    /// `dW/dr`; zero at the origin and outside the support.
    pub fn grad(&self, r: f64) -> f64 {
        let q = r / self.h;
        if q >= 3.0 || q <= 0.0 {
            return 0.0;
        }
        let mut s = -5.0 * (3.0 - q).powi(4);
        if q < 2.0 {
            s += 30.0 * (2.0 - q).powi(4);
        }
        if q < 1.0 {
            s -= 75.0 * (1.0 - q).powi(4);
        }
        self.sigma() * s / self.h
    }
}
