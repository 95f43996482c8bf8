//! Real discrete Fourier transforms for the spectral convolution layer.
//!
//! Conventions, fixed across the crate:
//!
//! * **Unitary scaling**: both directions carry `1/√N`, so a round trip is
//!   the identity and Parseval's theorem holds without extra factors.
//! * **Truncated half spectra**: only bins `k = 0..n_modes` of the real-input
//!   DFT are produced or consumed; the layer never touches the Nyquist bin.
//! * **Hermitian inverse**: [`irfft_trunc`] reconstructs the real signal from
//!   a half spectrum, doubling every non-DC bin and dropping the (physically
//!   meaningless) imaginary part of the DC bin.
//!
//! Power-of-two lengths run through an iterative radix-2 FFT; everything else
//! falls back to direct summation, which is fine at the crate's problem sizes
//! and makes the dispatch depend only on the length (keeping runs
//! reproducible).
//!
//! [`adj_rfft`] and [`adj_irfft`] are the exact transposes of [`rfft`] and
//! [`irfft_trunc`] as real-linear maps — the building blocks of the spectral
//! layer's backward pass. Transposition flips the doubling: the adjoint of
//! the inverse transform looks like a forward transform with doubled non-DC
//! bins, and vice versa.

/// Minimal complex value; only what the spectral layer needs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Cf64 {
    pub re: f64,
    pub im: f64,
}

impl Cf64 {
    pub fn new(re: f64, im: f64) -> Self {
        Cf64 { re, im }
    }

    pub fn conj(self) -> Self {
        Cf64 {
            re: self.re,
            im: -self.im,
        }
    }

    pub fn mul(self, o: Cf64) -> Self {
        Cf64 {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }

    pub fn add_assign(&mut self, o: Cf64) {
        self.re += o.re;
        self.im += o.im;
    }
}

/// Full complex DFT, radix-2 (length must be a power of two), no scaling.
fn fft_pow2(buf: &mut [Cf64], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * std::f64::consts::PI / len as f64;
        let wl = Cf64::new(ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let mut w = Cf64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let u = buf[i + k];
                let v = buf[i + k + len / 2].mul(w);
                buf[i + k] = Cf64::new(u.re + v.re, u.im + v.im);
                buf[i + k + len / 2] = Cf64::new(u.re - v.re, u.im - v.im);
                w = w.mul(wl);
            }
            i += len;
        }
        len <<= 1;
    }
}

/// Unitary real-input DFT, truncated to bins `0..n_modes`.
pub fn rfft(x: &[f64], n_modes: usize) -> Vec<Cf64> {
    let n = x.len();
    debug_assert!(n_modes <= n / 2 + 1, "requested {n_modes} bins of a length-{n} signal");
    let scale = 1.0 / (n as f64).sqrt();
    if n.is_power_of_two() && n >= 2 {
        let mut buf: Vec<Cf64> = x.iter().map(|&v| Cf64::new(v, 0.0)).collect();
        fft_pow2(&mut buf, false);
        (0..n_modes)
            .map(|k| Cf64::new(buf[k].re * scale, buf[k].im * scale))
            .collect()
    } else {
        (0..n_modes)
            .map(|k| {
                let mut acc = Cf64::default();
                for (j, &v) in x.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64;
                    acc.add_assign(Cf64::new(v * ang.cos(), v * ang.sin()));
                }
                Cf64::new(acc.re * scale, acc.im * scale)
            })
            .collect()
    }
}

/// Unitary inverse of a truncated half spectrum, Hermitian-extended:
/// `y_j = (1/√N)·[Re X₀ + Σ_{k≥1} 2(Re X_k cos(2πjk/N) − Im X_k sin(2πjk/N))]`.
pub fn irfft_trunc(spec: &[Cf64], n: usize) -> Vec<f64> {
    debug_assert!(spec.len() <= n / 2 + 1);
    let scale = 1.0 / (n as f64).sqrt();
    if n.is_power_of_two() && n >= 2 {
        // Hermitian extension into a full buffer, then a full inverse FFT.
        let mut buf = vec![Cf64::default(); n];
        for (k, &s) in spec.iter().enumerate() {
            if k == 0 {
                buf[0] = Cf64::new(s.re, 0.0);
            } else {
                buf[k] = s;
                buf[n - k] = s.conj();
            }
        }
        fft_pow2(&mut buf, true);
        buf.iter().map(|c| c.re * scale).collect()
    } else {
        (0..n)
            .map(|j| {
                let mut acc = spec[0].re;
                for (k, &s) in spec.iter().enumerate().skip(1) {
                    let ang = 2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64;
                    acc += 2.0 * (s.re * ang.cos() - s.im * ang.sin());
                }
                acc * scale
            })
            .collect()
    }
}

/// Transpose of [`irfft_trunc`] as a real-linear map
/// `(Re X₀, Re X₁, Im X₁, …) ↦ y`: a forward transform with non-DC bins
/// doubled and the DC imaginary part zeroed.
pub fn adj_irfft(y: &[f64], n_modes: usize) -> Vec<Cf64> {
    let mut spec = rfft(y, n_modes);
    for (k, s) in spec.iter_mut().enumerate() {
        if k == 0 {
            s.im = 0.0;
        } else {
            s.re *= 2.0;
            s.im *= 2.0;
        }
    }
    spec
}

/// Transpose of [`rfft`] as a real-linear map: an inverse-style sum without
/// the Hermitian doubling.
pub fn adj_rfft(spec: &[Cf64], n: usize) -> Vec<f64> {
    let scale = 1.0 / (n as f64).sqrt();
    if n.is_power_of_two() && n >= 2 {
        let mut buf = vec![Cf64::default(); n];
        for (k, &s) in spec.iter().enumerate() {
            buf[k] = s;
        }
        fft_pow2(&mut buf, true);
        buf.iter().map(|c| c.re * scale).collect()
    } else {
        (0..n)
            .map(|j| {
                let mut acc = 0.0;
                for (k, &s) in spec.iter().enumerate() {
                    let ang = 2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64;
                    acc += s.re * ang.cos() - s.im * ang.sin();
                }
                acc * scale
            })
            .collect()
    }
}
