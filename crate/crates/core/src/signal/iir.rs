//! Second-order-section IIR design and zero-phase application.

use std::f64::consts::PI;

use nalgebra::Complex;

type C64 = Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    /// Numerator b0, b1, b2.
    pub b: [f64; 3],
    /// Denominator a1, a2 (a0 normalised to 1).
    pub a: [f64; 2],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Transposed direct-form II state after a unit step has settled.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * g;
        let z1 = self.b[1] - self.a[0] * g + z2;
        [z1, z2]
    }

    fn response(&self, w: f64) -> C64 {
        let z1 = C64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        (self.b[0] + z1 * self.b[1] + z2 * self.b[2]) / (1.0 + z1 * self.a[0] + z2 * self.a[1])
    }
}

/// Cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    sections: Vec<Biquad>,
}

impl Sos {
    pub fn new(sections: Vec<Biquad>) -> Self {
        Self { sections }
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Complex frequency response at normalised angular frequency `w` (rad/sample).
    pub fn response(&self, w: f64) -> C64 {
        self.sections.iter().fold(C64::new(1.0, 0.0), |acc, s| acc * s.response(w))
    }

    /// Single forward pass; the state starts at the steady state for a
    /// constant input equal to `x[0]`.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        if x.is_empty() {
            return y;
        }
        let mut level = x[0];
        for s in &self.sections {
            let [mut z1, mut z2] = s.step_state().map(|v| v * level);
            level *= s.dc_gain();
            for v in y.iter_mut() {
                let xin = *v;
                let out = s.b[0] * xin + z1;
                z1 = s.b[1] * xin - s.a[0] * out + z2;
                z2 = s.b[2] * xin - s.a[1] * out;
                *v = out;
            }
        }
        y
    }

    /// Forward-backward filtering with odd-reflection padding at both ends.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        let mut y = self.filter(&ext);
        y.reverse();
        let mut y = self.filter(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }
}

/// Second-order notch at `freq` with quality factor `q`.
pub fn notch(rate: f64, freq: f64, q: f64) -> Biquad {
    let w0 = 2.0 * PI * freq / rate;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let c = -2.0 * w0.cos() / a0;
    Biquad {
        b: [1.0 / a0, c, 1.0 / a0],
        a: [c, (1.0 - alpha) / a0],
    }
}

/// Order-`order` Butterworth band-pass (2*order poles) via the bilinear
/// transform with frequency pre-warping; unit gain at the band centre.
pub fn butter_bandpass(rate: f64, lo: f64, hi: f64, order: usize) -> Sos {
    let fs2 = 2.0 * rate;
    let wl = fs2 * (PI * lo / rate).tan();
    let wh = fs2 * (PI * hi / rate).tan();
    let bw = wh - wl;
    let w0sq = wl * wh;
    let nf = order as f64;

    let mut poles: Vec<C64> = Vec::with_capacity(2 * order);
    for k in 1..=order {
        let p = C64::from_polar(1.0, PI * (2.0 * k as f64 + nf - 1.0) / (2.0 * nf));
        let a = p * (bw / 2.0);
        let disc = (a * a - w0sq).sqrt();
        for s in [a + disc, a - disc] {
            poles.push((fs2 + s) / (fs2 - s));
        }
    }

    let eps = 1e-10;
    let mut complex: Vec<C64> = poles.iter().copied().filter(|p| p.im > eps).collect();
    let mut real: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= eps).map(|p| p.re).collect();
    complex.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    real.sort_by(f64::total_cmp);

    let mut sections = Vec::with_capacity(order);
    for p in complex {
        sections.push(Biquad {
            b: [1.0, 0.0, -1.0],
            a: [-2.0 * p.re, p.norm_sqr()],
        });
    }
    for pair in real.chunks(2) {
        let (p1, p2) = (pair[0], *pair.get(1).unwrap_or(&0.0));
        sections.push(Biquad {
            b: [1.0, 0.0, -1.0],
            a: [-(p1 + p2), p1 * p2],
        });
    }
    let mut sos = Sos::new(sections);
    let wc = 2.0 * (w0sq.sqrt() / fs2).atan();
    let g = sos.response(wc).norm();
    for v in sos.sections[0].b.iter_mut() {
        *v /= g;
    }
    sos
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandpass_shape() {
        let sos = butter_bandpass(1000.0, 70.0, 200.0, 4);
        assert_eq!(sos.sections().len(), 4);
        let gain = |f: f64| sos.response(2.0 * PI * f / 1000.0).norm();
        // half-power at the band edges
        assert!((gain(70.0) - 0.5f64.sqrt()).abs() < 1e-9, "{}", gain(70.0));
        assert!((gain(200.0) - 0.5f64.sqrt()).abs() < 1e-9);
        assert!(gain(10.0) < 1e-4);
        assert!(gain(0.0) < 1e-12);
        for s in sos.sections() {
            // poles inside the unit circle
            assert!(s.a[1] < 1.0);
        }
    }

    #[test]
    fn notch_zero_at_center() {
        let b = notch(1000.0, 60.0, 30.0);
        let sos = Sos::new(vec![b]);
        assert!(sos.response(2.0 * PI * 60.0 / 1000.0).norm() < 1e-12);
        assert!((sos.response(0.0).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_passes_through_steady_state() {
        let sos = Sos::new(vec![notch(500.0, 50.0, 10.0)]);
        let y = sos.filtfilt(&[3.0; 40]);
        assert!(y.iter().all(|v| (v - 3.0).abs() < 1e-12));
    }
}
