//! Discrete Fourier transforms for the resolution estimate. Power-of-two
//! lengths use an iterative radix-2 transform, other lengths a direct sum.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    /// `exp(i * theta)`.
    pub fn cis(theta: f64) -> Self {
        Self::new(libm::cos(theta), libm::sin(theta))
    }

    pub fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn abs(self) -> f64 {
        libm::hypot(self.re, self.im)
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.re * k, self.im * k)
    }
}

impl Add for Complex {
    type Output = Complex;
    fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for Complex {
    type Output = Complex;
    fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for Complex {
    type Output = Complex;
    fn mul(self, o: Complex) -> Complex {
        Complex::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
}

/// In-place forward transform `X_k = sum_j x_j exp(-2 pi i j k / n)`.
pub fn fft(data: &mut [Complex]) {
    let n = data.len();
    if n <= 1 {
        return;
    }
    if !n.is_power_of_two() {
        let out = dft(data);
        data.copy_from_slice(&out);
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            data.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let w = Complex::cis(-2.0 * PI / len as f64);
        for start in (0..n).step_by(len) {
            let mut tw = Complex::new(1.0, 0.0);
            for k in 0..len / 2 {
                let a = data[start + k];
                let b = data[start + k + len / 2] * tw;
                data[start + k] = a + b;
                data[start + k + len / 2] = a - b;
                tw = tw * w;
            }
        }
        len <<= 1;
    }
}

/// Direct `O(n^2)` transform.
pub fn dft(data: &[Complex]) -> Vec<Complex> {
    let n = data.len();
    (0..n)
        .map(|k| {
            data.iter().enumerate().fold(Complex::ZERO, |acc, (j, &x)| {
                acc + x * Complex::cis(-2.0 * PI * ((j * k) % n) as f64 / n as f64)
            })
        })
        .collect()
}

/// Row-major 2-D transform of a `width x height` real image.
pub fn fft2(values: &[f64], width: usize, height: usize) -> Vec<Complex> {
    assert_eq!(values.len(), width * height);
    let mut data: Vec<Complex> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    for row in data.chunks_mut(width) {
        fft(row);
    }
    let mut col = alloc::vec![Complex::ZERO; height];
    for x in 0..width {
        for y in 0..height {
            col[y] = data[y * width + x];
        }
        fft(&mut col);
        for y in 0..height {
            data[y * width + x] = col[y];
        }
    }
    data
}
