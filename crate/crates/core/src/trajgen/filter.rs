use std::f64::consts::PI;

/// One second-order low-pass section designed with the bilinear transform
/// (cutoff pre-warped).
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn lowpass(cutoff: f64, sample_rate: f64, q: f64) -> Self {
        let k = (PI * cutoff / sample_rate).tan();
        let k2 = k * k;
        let norm = 1.0 / (1.0 + k / q + k2);
        let b0 = k2 * norm;
        Biquad {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k2 - 1.0) * norm, (1.0 - k / q + k2) * norm],
        }
    }

    /// Causal pass, transposed direct form II, zero initial state.
    fn apply(&self, x: &mut [f64]) {
        let (mut s1, mut s2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let u = *v;
            let y = self.b[0] * u + s1;
            s1 = self.b[1] * u - self.a[0] * y + s2;
            s2 = self.b[2] * u - self.a[1] * y;
            *v = y;
        }
    }

    fn response(&self, w: f64) -> (f64, f64) {
        let z1 = (w.cos(), -w.sin());
        let z2 = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (
            self.b[0] + self.b[1] * z1.0 + self.b[2] * z2.0,
            self.b[1] * z1.1 + self.b[2] * z2.1,
        );
        let den = (
            1.0 + self.a[0] * z1.0 + self.a[1] * z2.0,
            self.a[0] * z1.1 + self.a[1] * z2.1,
        );
        (num.0.hypot(num.1), den.0.hypot(den.1))
    }
}

/// Butterworth low-pass of even order, realized as cascaded second-order
/// sections.
#[derive(Debug, Clone)]
pub struct Butterworth {
    sections: Vec<Biquad>,
}

impl Butterworth {
    /// `order` is rounded up to the next even number (minimum 2).
    pub fn lowpass(order: usize, cutoff: f64, sample_rate: f64) -> Self {
        let pairs = order.max(2).div_ceil(2);
        let n = 2 * pairs;
        let sections = (0..pairs)
            .map(|k| {
                let theta = PI * (2 * k + 1) as f64 / (2 * n) as f64;
                Biquad::lowpass(cutoff, sample_rate, 1.0 / (2.0 * theta.cos()))
            })
            .collect();
        Butterworth { sections }
    }

    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }

    /// Causal pass with zero initial state.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            s.apply(&mut y);
        }
        y
    }

    /// Forward-backward pass: zero phase, squared magnitude response.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.apply(x);
        y.reverse();
        let mut y = self.apply(&y);
        y.reverse();
        y
    }

    /// Magnitude of the single-pass frequency response at `freq`.
    pub fn gain(&self, freq: f64, sample_rate: f64) -> f64 {
        let w = 2.0 * PI * freq / sample_rate;
        self.sections
            .iter()
            .map(|s| {
                let (num, den) = s.response(w);
                num / den
            })
            .product()
    }
}
