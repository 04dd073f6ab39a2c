//! Butterworth band-pass design as cascaded second-order sections, and
//! zero-phase forward-backward filtering.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// One biquad, `b0 b1 b2 / 1 a1 a2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sos {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Sos {
    fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        (self.b[0] + self.b[1] * z1 + self.b[2] * z2) / (self.a[0] + self.a[1] * z1 + self.a[2] * z2)
    }
}

/// Order-`order` digital Butterworth band-pass between `lo` and `hi` Hz.
///
/// Analog prototype, low-pass to band-pass transform with prewarped edges,
/// then the bilinear transform. Each section holds one conjugate pole pair and
/// the zero pair at z = 1 and z = -1; gains are set so the response is exactly
/// 1 at the digital centre frequency.
pub fn butter_bandpass(order: usize, lo: f64, hi: f64, fs: f64) -> Result<Vec<Sos>> {
    let nyq = fs / 2.0;
    if order == 0 || !(lo > 0.0 && lo < hi && hi < nyq) {
        return Err(Error::Invalid(format!(
            "band-pass needs 0 < lo < hi < {nyq} Hz, got [{lo}, {hi}]"
        )));
    }
    // prewarped edges with the bilinear constant 2 * fs' where fs' = 2
    let warp = |f: f64| 4.0 * (PI * (f / nyq) / 2.0).tan();
    let (wl, wh) = (warp(lo), warp(hi));
    let bw = wh - wl;
    let wo2 = wl * wh;

    let n = order as f64;
    let mut poles = Vec::with_capacity(2 * order);
    for k in 0..order {
        let m = -(n - 1.0) + 2.0 * k as f64;
        let p = -Complex64::from_polar(1.0, PI * m / (2.0 * n));
        let plp = p * (bw / 2.0);
        let disc = (plp * plp - wo2).sqrt();
        poles.push(plp + disc);
        poles.push(plp - disc);
    }
    let four = Complex64::new(4.0, 0.0);
    let mut zpoles: Vec<Complex64> = poles.iter().map(|&p| (four + p) / (four - p)).collect();
    zpoles.retain(|p| p.im > 0.0);
    if zpoles.len() != order {
        return Err(Error::Invalid("band-pass design produced real poles".into()));
    }
    zpoles.sort_by(|a, b| a.norm().total_cmp(&b.norm()));

    let w0 = 2.0 * (wo2.sqrt() / 4.0).atan();
    let sections = zpoles
        .into_iter()
        .map(|p| {
            let raw = Sos {
                b: [1.0, 0.0, -1.0],
                a: [1.0, -2.0 * p.re, p.norm_sqr()],
            };
            let g = 1.0 / raw.response(w0).norm();
            Sos {
                b: [g, 0.0, -g],
                a: raw.a,
            }
        })
        .collect();
    Ok(sections)
}

/// Magnitude response at `f` Hz.
pub fn magnitude(sos: &[Sos], f: f64, fs: f64) -> f64 {
    let w = 2.0 * PI * f / fs;
    sos.iter().map(|s| s.response(w).norm()).product()
}

/// Steady-state initial conditions for a unit step input.
pub fn sosfilt_zi(sos: &[Sos]) -> Vec<[f64; 2]> {
    let mut scale = 1.0;
    sos.iter()
        .map(|s| {
            let h = (s.b[0] + s.b[1] + s.b[2]) / (s.a[0] + s.a[1] + s.a[2]);
            let z2 = s.b[2] - s.a[2] * h;
            let z1 = s.b[1] + s.b[2] - (s.a[1] + s.a[2]) * h;
            let zi = [z1 * scale, z2 * scale];
            scale *= h;
            zi
        })
        .collect()
}

/// Transposed direct form II cascade. `zi` is updated in place.
pub fn sosfilt(sos: &[Sos], x: &[f64], zi: &mut [[f64; 2]]) -> Vec<f64> {
    let mut y = x.to_vec();
    for (s, z) in sos.iter().zip(zi.iter_mut()) {
        for v in y.iter_mut() {
            let xin = *v;
            let out = s.b[0] * xin + z[0];
            z[0] = s.b[1] * xin - s.a[1] * out + z[1];
            z[1] = s.b[2] * xin - s.a[2] * out;
            *v = out;
        }
    }
    y
}

pub fn default_padlen(sos: &[Sos]) -> usize {
    3 * (2 * sos.len() + 1)
}

/// Zero-phase filtering: odd extension, forward pass, backward pass.
pub fn sosfiltfilt(sos: &[Sos], x: &[f64]) -> Result<Vec<f64>> {
    let pad = default_padlen(sos);
    let n = x.len();
    if n <= pad {
        return Err(Error::InsufficientSignal(format!(
            "zero-phase filtering needs more than {pad} samples, got {n}"
        )));
    }
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let zi = sosfilt_zi(sos);
    let scaled = |v: f64| zi.iter().map(|z| [z[0] * v, z[1] * v]).collect::<Vec<_>>();
    let mut state = scaled(ext[0]);
    let mut y = sosfilt(sos, &ext, &mut state);
    y.reverse();
    let mut state = scaled(y[0]);
    let mut y = sosfilt(sos, &y, &mut state);
    y.reverse();
    Ok(y[pad..pad + n].to_vec())
}
