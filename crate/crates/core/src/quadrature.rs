//! Adaptive Gauss-Kronrod (7/15) quadrature on finite intervals.

#![allow(clippy::excessive_precision)]

// Kronrod abscissae on [0, 1] in decreasing order; odd indices are the
// Gauss nodes of the embedded 7-point rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
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

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_DEPTH: usize = 48;

/// One Kronrod panel: returns (K15 estimate, |K15 - G7|).
fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Integrates `f` over `[a, b]` to relative accuracy `rel_tol` (with an
/// absolute floor `abs_tol`) by recursive bisection of Kronrod panels.
///
/// Returns the estimate and the accumulated error bound.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> (f64, f64) {
    let (whole, _) = panel(&f, a, b);
    let target = (rel_tol * whole.abs()).max(abs_tol);
    let mut total = 0.0;
    let mut error = 0.0;
    refine(&f, a, b, target, 0, &mut total, &mut error);
    (total, error)
}

fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    depth: usize,
    total: &mut f64,
    error: &mut f64,
) {
    let (estimate, err) = panel(f, a, b);
    if err <= tol || depth >= MAX_DEPTH {
        *total += estimate;
        *error += err;
        return;
    }
    let mid = 0.5 * (a + b);
    refine(f, a, mid, 0.5 * tol, depth + 1, total, error);
    refine(f, mid, b, 0.5 * tol, depth + 1, total, error);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let (v, _) = integrate_adaptive(|x| 3.0 * x * x + 1.0, 0.0, 2.0, 1e-14, 0.0);
        assert!((v - 10.0).abs() < 1e-13);
    }

    #[test]
    fn oscillatory_integrand() {
        let (v, _) = integrate_adaptive(|x: f64| (10.0 * x).sin(), 0.0, 3.0, 1e-12, 1e-15);
        let exact = (1.0 - 30.0_f64.cos()) / 10.0;
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn peaked_integrand() {
        let (v, _) = integrate_adaptive(|x: f64| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-12, 0.0);
        let exact = 2.0 / 1e-2 * (1.0f64 / 1e-2).atan();
        assert!((v / exact - 1.0).abs() < 1e-11);
    }
}
