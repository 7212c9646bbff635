//! Unitary discrete Fourier transform of arbitrary length.
//!
//! Power-of-two lengths use an iterative radix-2 FFT; all other lengths go
//! through Bluestein's chirp-z reformulation on a padded power-of-two grid.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::C64;

#[derive(Debug, Clone)]
pub struct Dft {
    n: usize,
    scale: f64,
    plan: Plan,
}

#[derive(Debug, Clone)]
enum Plan {
    Radix2(Radix2),
    Bluestein {
        fft: Radix2,
        /// `exp(-i pi n^2 / N)` for `n < N`.
        chirp: Vec<C64>,
        /// Forward FFT of the conjugate chirp laid out circularly.
        kernel: Vec<C64>,
    },
}

impl Dft {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "empty transform");
        let scale = 1.0 / (n as f64).sqrt();
        if n.is_power_of_two() {
            return Dft { n, scale, plan: Plan::Radix2(Radix2::new(n)) };
        }
        let size = (2 * n - 1).next_power_of_two();
        let fft = Radix2::new(size);
        let two_n = 2 * n as u64;
        let chirp: Vec<C64> = (0..n as u64)
            .map(|k| {
                let phase = PI * ((k * k) % two_n) as f64 / n as f64;
                C64::new(phase.cos(), -phase.sin())
            })
            .collect();
        let mut kernel = vec![C64::new(0.0, 0.0); size];
        kernel[0] = chirp[0].conj();
        for k in 1..n {
            kernel[k] = chirp[k].conj();
            kernel[size - k] = chirp[k].conj();
        }
        fft.run(&mut kernel, false);
        Dft { n, scale, plan: Plan::Bluestein { fft, chirp, kernel } }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `F x` with `F` the unitary DFT matrix. Shorter inputs are zero-padded,
    /// which gives `F^{1:L} h` for an `L`-tap vector.
    pub fn forward(&self, x: &[C64]) -> Vec<C64> {
        self.transform(x, false)
    }

    /// `F^H x`.
    pub fn inverse(&self, x: &[C64]) -> Vec<C64> {
        self.transform(x, true)
    }

    fn transform(&self, x: &[C64], inverse: bool) -> Vec<C64> {
        assert!(x.len() <= self.n, "input longer than transform");
        let mut out = match &self.plan {
            Plan::Radix2(fft) => {
                let mut buf = vec![C64::new(0.0, 0.0); self.n];
                buf[..x.len()].copy_from_slice(x);
                fft.run(&mut buf, inverse);
                buf
            }
            Plan::Bluestein { fft, chirp, kernel } => {
                // The inverse transform is conj(F conj(x)).
                let size = kernel.len();
                let mut buf = vec![C64::new(0.0, 0.0); size];
                for (k, v) in x.iter().enumerate() {
                    let v = if inverse { v.conj() } else { *v };
                    buf[k] = v * chirp[k];
                }
                fft.run(&mut buf, false);
                for (b, k) in buf.iter_mut().zip(kernel) {
                    *b *= k;
                }
                fft.run(&mut buf, true);
                let norm = 1.0 / size as f64;
                (0..self.n)
                    .map(|k| {
                        let v = buf[k] * chirp[k] * norm;
                        if inverse {
                            v.conj()
                        } else {
                            v
                        }
                    })
                    .collect()
            }
        };
        for v in out.iter_mut() {
            *v *= self.scale;
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Radix2 {
    n: usize,
    twiddles: Vec<C64>,
}

impl Radix2 {
    fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let twiddles = (0..n / 2)
            .map(|k| {
                let phase = -2.0 * PI * k as f64 / n as f64;
                C64::new(phase.cos(), phase.sin())
            })
            .collect();
        Radix2 { n, twiddles }
    }

    /// Unnormalized in-place transform; `inverse` flips the exponent sign.
    fn run(&self, buf: &mut [C64], inverse: bool) {
        let n = self.n;
        if n == 1 {
            return;
        }
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let step = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..len / 2 {
                    let mut w = self.twiddles[k * step];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + len / 2] * w;
                    buf[start + k] = a + b;
                    buf[start + k + len / 2] = a - b;
                }
            }
            len <<= 1;
        }
    }
}
