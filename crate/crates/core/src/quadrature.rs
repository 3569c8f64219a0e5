//! Adaptive Gauss–Kronrod (7, 15) quadrature.

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

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Integrates `f` over `[a, b]` to `max(abs_tol, rel_tol * |I|)` by
/// bisecting the panel with the largest error estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Integral {
    if a == b {
        return Integral { value: 0.0, error: 0.0 };
    }
    let (v, e) = gk15(&f, a, b);
    let mut panels = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    let max_panels = 20_000;
    while err > abs_tol.max(rel_tol * total.abs()) && panels.len() < max_panels {
        let (i, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (pa, pb, pv, pe) = panels.swap_remove(i);
        let m = 0.5 * (pa + pb);
        if m <= pa || m >= pb {
            // Panel can no longer be split in floating point.
            panels.push((pa, pb, pv, 0.0));
            err -= pe;
            continue;
        }
        let (lv, le) = gk15(&f, pa, m);
        let (rv, re) = gk15(&f, m, pb);
        total += lv + rv - pv;
        err += le + re - pe;
        panels.push((pa, m, lv, le));
        panels.push((m, pb, rv, re));
    }
    // Re-sum to shed accumulated rounding from the running updates.
    let value = panels.iter().map(|p| p.2).sum();
    let error = panels.iter().map(|p| p.3).sum();
    Integral { value, error }
}

/// Integrates over consecutive breakpoints, splitting at each.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, breaks: &[f64], abs_tol: f64, rel_tol: f64) -> Integral {
    let n = (breaks.len().max(2) - 1) as f64;
    breaks.windows(2).fold(Integral { value: 0.0, error: 0.0 }, |acc, w| {
        let piece = integrate(&f, w[0], w[1], abs_tol / n, rel_tol);
        Integral {
            value: acc.value + piece.value,
            error: acc.error + piece.error,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-14, 1e-14);
        assert!((r.value - 0.0).abs() < 1e-13);
    }

    #[test]
    fn endpoint_power_singularity() {
        // x^-0.5 on (0, 1] integrates to 2.
        let r = integrate(|x| x.powf(-0.5), 0.0, 1.0, 1e-10, 1e-12);
        assert!((r.value - 2.0).abs() < 1e-8, "{}", r.value);
    }

    #[test]
    fn pieces_split_cusp() {
        let r = integrate_pieces(|x: f64| (x - 0.3).abs().powf(0.25), &[0.0, 0.3, 1.0], 1e-13, 1e-13);
        let exact = (0.3f64.powf(1.25) + 0.7f64.powf(1.25)) / 1.25;
        assert!((r.value - exact).abs() < 1e-11);
    }
}
