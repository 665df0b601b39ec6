//! Adaptive Gauss–Kronrod (7/15) quadrature with global bisection.

use crate::real::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadratureTolerance<T> {
    pub rel: T,
    pub abs: T,
    pub max_subintervals: usize,
}

impl<T: Real> Default for QuadratureTolerance<T> {
    fn default() -> Self {
        Self {
            rel: T::lit(1e-10).max(T::lit(50.0) * T::epsilon()),
            abs: T::lit(1e-14),
            max_subintervals: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadratureError<T> {
    /// The integrand returned a non-finite value at the given abscissa.
    NonFinite(T),
    NoConvergence { estimate: T, tolerance: T },
}

#[derive(Debug, Clone, Copy)]
struct Panel<T> {
    lo: T,
    hi: T,
    value: T,
    error: T,
}

fn gauss_kronrod<T: Real, F: FnMut(T) -> T>(
    f: &mut F,
    lo: T,
    hi: T,
) -> Result<Panel<T>, QuadratureError<T>> {
    let half = T::lit(0.5);
    let center = half * (lo + hi);
    let radius = half * (hi - lo);
    let mut eval = |x: T| -> Result<T, QuadratureError<T>> {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QuadratureError::NonFinite(x))
        }
    };

    let fc = eval(center)?;
    let mut kronrod = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for (j, (&node, &wk)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = radius * T::lit(node);
        let pair = eval(center - dx)? + eval(center + dx)?;
        kronrod += T::lit(wk) * pair;
        if j % 2 == 1 {
            gauss += T::lit(WG[j / 2]) * pair;
        }
    }
    Ok(Panel {
        lo,
        hi,
        value: kronrod * radius,
        error: ((kronrod - gauss) * radius).abs(),
    })
}

/// Integrates `f` over `[lo, hi]` (either orientation).
pub fn integrate<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    lo: T,
    hi: T,
    tol: &QuadratureTolerance<T>,
) -> Result<T, QuadratureError<T>> {
    if lo == hi {
        return Ok(T::zero());
    }
    if hi < lo {
        return integrate(f, hi, lo, tol).map(|v| -v);
    }

    let mut panels = vec![gauss_kronrod(&mut f, lo, hi)?];
    loop {
        let total: T = panels.iter().map(|p| p.value).sum();
        let error: T = panels.iter().map(|p| p.error).sum();
        let magnitude: T = panels.iter().map(|p| p.value.abs()).sum();
        let target = tol.abs.max(tol.rel * total.abs());
        // Below this the error estimate is dominated by rounding.
        let floor = T::lit(50.0) * T::epsilon() * magnitude;
        if error <= target || error <= floor {
            return Ok(total);
        }
        if panels.len() >= tol.max_subintervals {
            return Err(QuadratureError::NoConvergence {
                estimate: error,
                tolerance: target,
            });
        }

        let worst = panels
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.error.partial_cmp(&b.1.error).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let panel = panels.swap_remove(worst);
        let mid = T::lit(0.5) * (panel.lo + panel.hi);
        if mid <= panel.lo || mid >= panel.hi {
            return Err(QuadratureError::NoConvergence {
                estimate: error,
                tolerance: target,
            });
        }
        panels.push(gauss_kronrod(&mut f, panel.lo, mid)?);
        panels.push(gauss_kronrod(&mut f, mid, panel.hi)?);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact_on_one_panel() {
        let tol = QuadratureTolerance::<f64>::default();
        let v = integrate(|x: f64| 3.0 * x * x + 1.0, 0.0, 2.0, &tol).unwrap();
        assert!((v - 10.0).abs() < 1e-13);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let tol = QuadratureTolerance::<f64>::default();
        let v = integrate(f64::exp, 1.0, 0.0, &tol).unwrap();
        assert!((v + (std::f64::consts::E - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn sharp_integrand_converges_adaptively() {
        let tol = QuadratureTolerance::<f64>::default();
        // arctan'(x / 0.01) / 0.01
        let v = integrate(|x: f64| 1.0 / (1e-4 + x * x), -1.0, 1.0, &tol).unwrap();
        let exact = 2.0 * (100.0f64).atan() / 0.01;
        assert!(((v - exact) / exact).abs() < 1e-10);
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let tol = QuadratureTolerance::<f64>::default();
        let err = integrate(|x: f64| if x > 0.5 { f64::NAN } else { x }, 0.0, 1.0, &tol);
        assert!(matches!(err, Err(QuadratureError::NonFinite(_))));
    }
}
