//! Comb mixing, band gains and the envelope postfilter.

use num_complex::Complex;

use crate::dsp::{BandLayout, SpectralFrame};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EnhancementParams {
    /// Postfilter exponent.
    pub beta: f64,
    /// Lower bound on band gains, in `[0, 0.1]`.
    pub floor: f64,
    pub comb: bool,
    pub postfilter: bool,
}

impl Default for EnhancementParams {
    fn default() -> Self {
        Self { beta: 0.4, floor: 0.0, comb: true, postfilter: true }
    }
}

impl EnhancementParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("postfilter beta {} must be >= 0", self.beta)));
        }
        if !(0.0..=0.1).contains(&self.floor) {
            return Err(Error::Config(format!("gain floor {} outside [0, 0.1]", self.floor)));
        }
        Ok(())
    }
}

fn check<T: Real>(layout: &BandLayout<T>, frame: &SpectralFrame<T>) -> Result<()> {
    if frame.bins.len() != layout.n_bins() {
        return Err(Error::SpectrumSize { expected: layout.n_bins(), found: frame.bins.len() });
    }
    Ok(())
}

fn check_bands(layout_bands: usize, v: usize) -> Result<()> {
    if v != layout_bands {
        return Err(Error::Config(format!("expected {layout_bands} band values, got {v}")));
    }
    Ok(())
}

/// Solves `A a = t` for the tridiagonal `A` (diagonal `d`, off-diagonal `e`
/// with `e[b]` linking `b` and `b + 1`).
fn thomas(d: &[f64], e: &[f64], t: &[f64]) -> Option<Vec<f64>> {
    let n = d.len();
    let mut c = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut denom = d[0];
    if denom.abs() < 1e-300 {
        return None;
    }
    c[0] = if n > 1 { e[0] / denom } else { 0.0 };
    y[0] = t[0] / denom;
    for b in 1..n {
        denom = d[b] - e[b - 1] * c[b - 1];
        if denom.abs() < 1e-300 {
            return None;
        }
        c[b] = if b + 1 < n { e[b] / denom } else { 0.0 };
        y[b] = (t[b] - e[b - 1] * y[b - 1]) / denom;
    }
    for b in (0..n - 1).rev() {
        y[b] -= c[b] * y[b + 1];
    }
    Some(y)
}

/// Per-bin gains that give `sum_k w_b(k) g_k^2 p_k = target_b` for every
/// band, where `log g_k^2` is interpolated from per-band values with the
/// layout weights.
///
/// In the log domain this is the stationary point of the convex
/// `F(x) = sum_k p_k exp(c_k . x) - t . x`, found by Newton steps.
/// Bins with `fixed[k]` set keep gain 1 and are left out.
fn band_match<T: Real>(layout: &BandLayout<T>, p: &[f64], fixed: &[bool], target: &[f64]) -> Vec<f64> {
    let nb = layout.n_bands();
    // (band, weight) pairs per bin; the second band is usize::MAX if absent
    let mut pairs = vec![(usize::MAX, 0.0f64, usize::MAX, 0.0f64); p.len()];
    layout.for_each_weight(|k, b, w| {
        let slot = &mut pairs[k];
        if slot.0 == usize::MAX {
            *slot = (b, w.to_f64_lossy(), usize::MAX, 0.0);
        } else {
            slot.2 = b;
            slot.3 = w.to_f64_lossy();
        }
    });
    let free: Vec<usize> = (0..p.len()).filter(|&k| !fixed[k] && p[k] > 0.0).collect();
    let mut live = vec![false; nb];
    let mut mass = vec![0.0f64; nb];
    for &k in &free {
        let (b0, w0, b1, w1) = pairs[k];
        live[b0] |= w0 > 0.0;
        mass[b0] += w0 * p[k];
        if b1 != usize::MAX {
            live[b1] |= w1 > 0.0;
            mass[b1] += w1 * p[k];
        }
    }
    let exponent = |x: &[f64], k: usize| {
        let (b0, w0, b1, w1) = pairs[k];
        w0 * x[b0] + if b1 != usize::MAX { w1 * x[b1] } else { 0.0 }
    };
    let mut x = vec![0.0f64; nb];
    for b in 0..nb {
        if live[b] && target[b] > 0.0 {
            x[b] = (target[b] / mass[b]).ln();
        }
    }
    let scale = target.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
    for _ in 0..60 {
        let mut grad = vec![0.0f64; nb];
        let mut diag = vec![0.0f64; nb];
        let mut off = vec![0.0f64; nb];
        for &k in &free {
            let (b0, w0, b1, w1) = pairs[k];
            let e = p[k] * exponent(&x, k).exp();
            grad[b0] += w0 * e;
            diag[b0] += w0 * w0 * e;
            if b1 != usize::MAX {
                grad[b1] += w1 * e;
                diag[b1] += w1 * w1 * e;
                off[b0.min(b1)] += w0 * w1 * e;
            }
        }
        let mut worst = 0.0f64;
        for b in 0..nb {
            if live[b] {
                grad[b] -= target[b];
                worst = worst.max(grad[b].abs() / target[b].max(1e-12 * scale));
            } else {
                grad[b] = 0.0;
                diag[b] = 1.0;
                off[b] = 0.0;
                if b > 0 {
                    off[b - 1] = 0.0;
                }
            }
        }
        if worst < 1e-9 {
            break;
        }
        // bands sharing their only bins make the Hessian singular
        for d in diag.iter_mut() {
            *d *= 1.0 + 1e-9;
        }
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let Some(step) = thomas(&diag, &off, &neg) else { break };
        // the objective is a sum of exponentials: steps down are bounded by
        // one per coordinate, steps up can overshoot and are clamped
        let big = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let t = if big > 2.0 { 2.0 / big } else { 1.0 };
        for (a, s) in x.iter_mut().zip(&step) {
            *a = (*a + t * s).clamp(-700.0, 700.0);
        }
    }
    (0..p.len())
        .map(|k| if fixed[k] { 1.0 } else { (0.5 * exponent(&x, k)).exp() })
        .collect()
}

/// Mixes the comb-filtered spectrum `c` into `y` by per-band strength, then
/// restores the band energies of `y`.
pub fn mix_comb<T: Real>(
    y: &SpectralFrame<T>,
    c: &SpectralFrame<T>,
    strength: &[T],
    layout: &BandLayout<T>,
) -> Result<SpectralFrame<T>> {
    check(layout, y)?;
    check(layout, c)?;
    check_bands(layout.n_bands(), strength.len())?;
    if strength.iter().all(|&r| r == T::zero()) {
        return Ok(y.clone());
    }
    let r = layout.interpolate(strength);
    let mixed: Vec<Complex<T>> = y
        .bins
        .iter()
        .zip(&c.bins)
        .zip(&r)
        .map(|((&yk, &ck), &rk)| yk * (T::one() - rk) + ck * rk)
        .collect();
    let ey = layout.band_energies(&y.bins)?;
    let em = layout.band_energies(&mixed)?;
    let nb = layout.n_bands();
    let degenerate: Vec<bool> = (0..nb).map(|b| ey[b] == T::zero() || em[b] == T::zero()).collect();
    let mut fixed = vec![false; mixed.len()];
    layout.for_each_weight(|k, b, _| fixed[k] |= degenerate[b]);
    let p: Vec<f64> = (0..mixed.len())
        .map(|k| if fixed[k] { y.bins[k].norm_sqr() } else { mixed[k].norm_sqr() }.to_f64_lossy())
        .collect();
    let mut target = vec![0.0f64; nb];
    layout.for_each_weight(|k, b, w| {
        if !fixed[k] {
            target[b] += w.to_f64_lossy() * y.bins[k].norm_sqr().to_f64_lossy();
        }
    });
    let g = band_match(layout, &p, &fixed, &target);
    let bins = (0..mixed.len())
        .map(|k| if fixed[k] { y.bins[k] } else { mixed[k] * T::lit(g[k]) })
        .collect();
    Ok(SpectralFrame { bins, index: y.index })
}

/// Ideal band gains `sqrt(E_b(clean) / E_b(noisy))`; zero where the noisy band is empty.
pub fn oracle_gains<T: Real>(clean_energy: &[T], noisy_energy: &[T]) -> Vec<T> {
    clean_energy
        .iter()
        .zip(noisy_energy)
        .map(|(&x, &y)| if y > T::zero() { (x / y).sqrt() } else { T::zero() })
        .collect()
}

/// Multiplies every bin by the interpolated gain curve.
pub fn apply_gains<T: Real>(
    m: &SpectralFrame<T>,
    gains: &[T],
    layout: &BandLayout<T>,
) -> Result<SpectralFrame<T>> {
    check(layout, m)?;
    check_bands(layout.n_bands(), gains.len())?;
    let curve = layout.interpolate(gains);
    Ok(SpectralFrame {
        bins: m.bins.iter().zip(&curve).map(|(&b, &g)| b * g).collect(),
        index: m.index,
    })
}

/// `g_b sin(pi g_b / 2)^beta`, before renormalization.
pub fn postfilter_curve<T: Real>(g: T, beta: f64) -> T {
    let s = (std::f64::consts::FRAC_PI_2 * g.to_f64_lossy()).sin().max(0.0);
    g * T::lit(s.powf(beta))
}

/// Sharpens the gains and rescales them so `sum_b g_b^2 E_b` is unchanged.
pub fn envelope_postfilter<T: Real>(gains: &[T], band_energy: &[T], beta: f64) -> Vec<T> {
    let mut out: Vec<T> = gains.iter().map(|&g| postfilter_curve(g, beta)).collect();
    let before: f64 = gains
        .iter()
        .zip(band_energy)
        .map(|(&g, &e)| (g * g * e).to_f64_lossy())
        .sum();
    let after: f64 = out
        .iter()
        .zip(band_energy)
        .map(|(&g, &e)| (g * g * e).to_f64_lossy())
        .sum();
    if after > 0.0 && before > 0.0 {
        let s = T::lit((before / after).sqrt());
        out.iter_mut().for_each(|g| *g *= s);
    }
    out
}

/// Postfilter and floor as configured by `params`.
pub fn final_gains<T: Real>(gains: &[T], band_energy: &[T], params: &EnhancementParams) -> Vec<T> {
    let mut g = if params.postfilter {
        envelope_postfilter(gains, band_energy, params.beta)
    } else {
        gains.to_vec()
    };
    if params.floor > 0.0 {
        let f = T::lit(params.floor);
        g.iter_mut().for_each(|v| *v = v.max(f));
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn layout() -> BandLayout<f64> {
        BandLayout::for_rate(16_000, 320)
    }

    fn random_frame(rng: &mut ChaCha8Rng, tilt: bool) -> SpectralFrame<f64> {
        SpectralFrame {
            bins: (0..161)
                .map(|k| {
                    let a = if tilt { 1.0 / (1.0 + k as f64 / 10.0) } else { 1.0 };
                    Complex::new(rng.gen_range(-1.0..1.0) * a, rng.gen_range(-1.0..1.0) * a)
                })
                .collect(),
            index: 0,
        }
    }

    #[test]
    fn zero_strength_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (y, c) = (random_frame(&mut rng, false), random_frame(&mut rng, false));
        let m = mix_comb(&y, &c, &[0.0; 32], &layout()).unwrap();
        assert_eq!(m, y);
    }

    #[test]
    fn full_strength_is_comb_rescaled_to_y_energies() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = layout();
        let (y, c) = (random_frame(&mut rng, true), random_frame(&mut rng, false));
        let m = mix_comb(&y, &c, &[1.0; 32], &l).unwrap();
        // every output bin is a non-negative real multiple of the comb bin
        for (o, ck) in m.bins.iter().zip(&c.bins) {
            let ratio = o / ck;
            assert!(ratio.im.abs() < 1e-9 && ratio.re >= 0.0);
        }
        let (ey, em) = (l.band_energies(&y.bins).unwrap(), l.band_energies(&m.bins).unwrap());
        for b in 0..32 {
            assert!((em[b] - ey[b]).abs() <= 1e-5 * ey[b]);
        }
    }

    #[test]
    fn mixing_preserves_band_energy() {
        let l = layout();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (ty, tc) = (rng.gen_bool(0.5), rng.gen_bool(0.5));
            let y = random_frame(&mut rng, ty);
            let c = random_frame(&mut rng, tc);
            let r: Vec<f64> = (0..32).map(|_| rng.gen_range(0.0..1.0)).collect();
            let m = mix_comb(&y, &c, &r, &l).unwrap();
            let (ey, em) = (l.band_energies(&y.bins).unwrap(), l.band_energies(&m.bins).unwrap());
            for b in 0..32 {
                assert!((em[b] - ey[b]).abs() <= 1e-5 * ey[b], "band {b}: {} vs {}", em[b], ey[b]);
            }
        }
    }

    #[test]
    fn zero_energy_band_copies_y() {
        let l = layout();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = random_frame(&mut rng, false);
        let c = SpectralFrame::zeros(161);
        let m = mix_comb(&y, &c, &[1.0; 32], &l).unwrap();
        assert_eq!(m, y);
    }

    #[test]
    fn gain_edge_cases() {
        let l = layout();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = random_frame(&mut rng, false);
        assert_eq!(apply_gains(&y, &[1.0; 32], &l).unwrap(), y);
        let z = apply_gains(&y, &[0.0; 32], &l).unwrap();
        assert!(z.bins.iter().all(|b| b.norm_sqr() == 0.0));
    }

    #[test]
    fn postfilter_curve_points() {
        assert_eq!(postfilter_curve(1.0f64, 0.4), 1.0);
        assert_eq!(postfilter_curve(0.0f64, 0.4), 0.0);
        let mid = postfilter_curve(0.5f64, 0.4);
        // sin(pi/4)^0.4 = 2^-0.2
        assert!((mid - 0.5 * 2f64.powf(-0.2)).abs() < 1e-12);
        assert!(mid < 0.5);
        let mut prev = 0.0;
        for i in 1..=1000 {
            let g = i as f64 / 1000.0;
            let v = postfilter_curve(g, 0.4);
            assert!(v > prev && v <= g);
            prev = v;
        }
    }

    #[test]
    fn postfilter_preserves_total_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g: Vec<f64> = (0..32).map(|_| rng.gen_range(0.0..1.0)).collect();
        let e: Vec<f64> = (0..32).map(|_| rng.gen_range(0.0..10.0)).collect();
        let out = envelope_postfilter(&g, &e, 0.4);
        let before: f64 = g.iter().zip(&e).map(|(g, e)| g * g * e).sum();
        let after: f64 = out.iter().zip(&e).map(|(g, e)| g * g * e).sum();
        assert!((before - after).abs() < 1e-12 * before);
        assert_eq!(envelope_postfilter(&[0.0; 32], &e, 0.4), vec![0.0; 32]);
    }

    #[test]
    fn params_are_validated() {
        assert!(EnhancementParams::default().validate().is_ok());
        assert!(EnhancementParams { beta: -1.0, ..Default::default() }.validate().is_err());
        assert!(EnhancementParams { floor: 0.2, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn thomas_solves_small_system() {
        let a = thomas(&[4.0, 5.0, 6.0], &[1.0, 2.0, 0.0], &[6.0, 17.0, 22.0]).unwrap();
        // A = [[4,1,0],[1,5,2],[0,2,6]], x = [1,2,3]
        for (v, e) in a.iter().zip([1.0, 2.0, 3.0]) {
            assert!((v - e).abs() < 1e-12);
        }
    }
}
