use rayon::prelude::*;

use super::{heaviside, heaviside_prime};
use crate::error::Result;
use crate::grid::Field;
use crate::scalar::Scalar;
use crate::similarity::PairWeights;

/// Smoothing inside the gradient magnitude `sqrt(|∇H|² + η²)`.
pub const GRAD_ETA: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyTerms<T> {
    /// `data + λ · reg`.
    pub total: T,
    pub data: T,
    pub reg: T,
}

fn heaviside_field<T: Scalar>(phi: &Field<T>, epsilon: T) -> Field<T> {
    phi.map(|v| heaviside(v, epsilon))
}

/// Sums per-row partials in row order so the result does not depend on
/// the thread count.
fn ordered_sum<T: Scalar>(rows: Vec<T>) -> T {
    rows.into_iter().fold(T::zero(), |a, b| a + b)
}

fn data_pass<T: Scalar>(pairs: &PairWeights<T>, h: &Field<T>, want_grad: bool) -> (T, Option<Vec<T>>) {
    let (w, ht) = pairs.dims();
    let hs = h.as_slice();
    let rows: Vec<(T, Vec<T>)> = (0..ht)
        .into_par_iter()
        .map(|y| {
            let mut e_row = T::zero();
            let mut g_row = if want_grad { vec![T::zero(); w] } else { Vec::new() };
            let mut scratch = Vec::new();
            for x in 0..w {
                let h_s = hs[y * w + x];
                let mut e = T::zero();
                let mut g = T::zero();
                pairs.for_each_partner_run(x, y, &mut scratch, |t0, run| {
                    let h_t = &hs[t0..t0 + run.len()];
                    if want_grad {
                        for (&wt, &ht_) in run.iter().zip(h_t) {
                            let diff = h_s - ht_;
                            e = e + (wt - diff.abs() * wt);
                            g = g - diff.sign0() * wt;
                        }
                    } else {
                        for (&wt, &ht_) in run.iter().zip(h_t) {
                            e = e + (wt - (h_s - ht_).abs() * wt);
                        }
                    }
                });
                e_row = e_row + e;
                if want_grad {
                    g_row[x] = g;
                }
            }
            (e_row, g_row)
        })
        .collect();
    let mut energy = T::zero();
    let mut grad = want_grad.then(|| Vec::with_capacity(w * ht));
    for (e, g) in rows {
        energy = energy + e;
        if let Some(buf) = &mut grad {
            buf.extend(g);
        }
    }
    (energy, grad)
}

/// Central differences with indices clamped to the image.
#[inline]
fn central<T: Scalar>(h: &Field<T>, x: usize, y: usize) -> (T, T) {
    let (w, ht) = h.dims();
    let half = T::lit(0.5);
    let gx = (h.get((x + 1).min(w - 1), y) - h.get(x.saturating_sub(1), y)) * half;
    let gy = (h.get(x, (y + 1).min(ht - 1)) - h.get(x, y.saturating_sub(1))) * half;
    (gx, gy)
}

fn reg_energy_of<T: Scalar>(h: &Field<T>, weights: Option<&Field<T>>) -> T {
    let (w, ht) = h.dims();
    let eta2 = T::lit(GRAD_ETA * GRAD_ETA);
    let rows: Vec<T> = (0..ht)
        .into_par_iter()
        .map(|y| {
            let mut acc = T::zero();
            for x in 0..w {
                let (gx, gy) = central(h, x, y);
                let g = weights.map_or(T::one(), |f| f.get(x, y));
                acc = acc + g * (gx * gx + gy * gy + eta2).sqrt();
            }
            acc
        })
        .collect();
    ordered_sum(rows)
}

/// Gradient of the length term with respect to `H`, i.e. `-div(N)` with the
/// discrete adjoint of the clamped central difference.
fn reg_grad_wrt_h<T: Scalar>(h: &Field<T>, weights: Option<&Field<T>>) -> Field<T> {
    let (w, ht) = h.dims();
    let eta2 = T::lit(GRAD_ETA * GRAD_ETA);
    let half = T::lit(0.5);
    let mut out = Field::filled(w, ht, T::zero());
    let buf = out.as_mut_slice();
    for y in 0..ht {
        for x in 0..w {
            let (gx, gy) = central(h, x, y);
            let g = weights.map_or(T::one(), |f| f.get(x, y));
            let inv = g / (gx * gx + gy * gy + eta2).sqrt();
            let nx = gx * inv * half;
            let ny = gy * inv * half;
            buf[y * w + (x + 1).min(w - 1)] = buf[y * w + (x + 1).min(w - 1)] + nx;
            buf[y * w + x.saturating_sub(1)] = buf[y * w + x.saturating_sub(1)] - nx;
            buf[(y + 1).min(ht - 1) * w + x] = buf[(y + 1).min(ht - 1) * w + x] + ny;
            buf[y.saturating_sub(1) * w + x] = buf[y.saturating_sub(1) * w + x] - ny;
        }
    }
    out
}

/// Contour-length energy `Σ g(s) sqrt(|∇H(φ)|² + η²)`; `weights = None`
/// means `g ≡ 1`.
pub fn reg_energy<T: Scalar>(phi: &Field<T>, epsilon: T, weights: Option<&Field<T>>) -> Result<T> {
    if let Some(g) = weights {
        phi.same_dims(g)?;
    }
    Ok(reg_energy_of(&heaviside_field(phi, epsilon), weights))
}

/// Exact derivative of [`reg_energy`] with respect to `φ`.
pub fn reg_gradient<T: Scalar>(phi: &Field<T>, epsilon: T, weights: Option<&Field<T>>) -> Result<Field<T>> {
    if let Some(g) = weights {
        phi.same_dims(g)?;
    }
    let mut grad = reg_grad_wrt_h(&heaviside_field(phi, epsilon), weights);
    for (g, p) in grad.as_mut_slice().iter_mut().zip(phi.as_slice()) {
        *g = *g * heaviside_prime(*p, epsilon);
    }
    Ok(grad)
}

/// Derivative of the non-local data energy with respect to `φ`.
pub fn data_gradient<T: Scalar>(pairs: &PairWeights<T>, phi: &Field<T>, epsilon: T) -> Result<Field<T>> {
    check_dims(pairs, phi)?;
    let (_, grad) = data_pass(pairs, &heaviside_field(phi, epsilon), true);
    let mut grad = grad.expect("gradient requested");
    let two = T::lit(2.0);
    for (g, p) in grad.iter_mut().zip(phi.as_slice()) {
        *g = two * heaviside_prime(*p, epsilon) * *g;
    }
    let (w, h) = phi.dims();
    Field::new(w, h, grad)
}

/// Data, length and total energy of `φ`.
pub fn energy<T: Scalar>(pairs: &PairWeights<T>, phi: &Field<T>, lambda: T, epsilon: T) -> Result<EnergyTerms<T>> {
    check_dims(pairs, phi)?;
    let h = heaviside_field(phi, epsilon);
    let (data, _) = data_pass(pairs, &h, false);
    let reg = reg_energy_of(&h, None);
    Ok(EnergyTerms {
        total: data + lambda * reg,
        data,
        reg,
    })
}

/// Energy terms together with the full gradient `∇E_D + λ ∇E_R`, computed
/// in a single sweep over the pairs.
pub fn evaluate<T: Scalar>(
    pairs: &PairWeights<T>,
    phi: &Field<T>,
    lambda: T,
    epsilon: T,
) -> Result<(EnergyTerms<T>, Field<T>)> {
    check_dims(pairs, phi)?;
    let h = heaviside_field(phi, epsilon);
    let (data, grad_d) = data_pass(pairs, &h, true);
    let reg = reg_energy_of(&h, None);
    let grad_r = reg_grad_wrt_h(&h, None);
    let two = T::lit(2.0);
    let mut grad = grad_d.expect("gradient requested");
    for ((g, r), p) in grad.iter_mut().zip(grad_r.as_slice()).zip(phi.as_slice()) {
        *g = heaviside_prime(*p, epsilon) * (two * *g + lambda * *r);
    }
    let (w, ht) = phi.dims();
    Ok((
        EnergyTerms {
            total: data + lambda * reg,
            data,
            reg,
        },
        Field::new(w, ht, grad)?,
    ))
}

pub(crate) fn reg_terms<T: Scalar>(phi: &Field<T>, epsilon: T, weights: Option<&Field<T>>) -> (T, Field<T>) {
    let h = heaviside_field(phi, epsilon);
    let e = reg_energy_of(&h, weights);
    let mut grad = reg_grad_wrt_h(&h, weights);
    for (g, p) in grad.as_mut_slice().iter_mut().zip(phi.as_slice()) {
        *g = *g * heaviside_prime(*p, epsilon);
    }
    (e, grad)
}

fn check_dims<T: Scalar>(pairs: &PairWeights<T>, phi: &Field<T>) -> Result<()> {
    let (w, h) = pairs.dims();
    if phi.dims() != (w, h) {
        return Err(crate::error::Error::DimensionMismatch {
            left_w: w,
            left_h: h,
            right_w: phi.width(),
            right_h: phi.height(),
        });
    }
    Ok(())
}
