//! Adaptive Gauss-Kronrod (7/15) quadrature.

use crate::scalar::Scalar;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Kronrod panel: returns `(K15 estimate, |K15 - G7|)`.
pub fn gk15<T: Scalar, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T) {
    let half = (b - a) / T::lit(2.0);
    let centre = a + half;
    let fc = f(centre);
    let mut kronrod = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = half * T::lit(XGK[j]);
        let s = f(centre - dx) + f(centre + dx);
        kronrod += s * T::lit(WGK[j]);
        if j % 2 == 1 {
            gauss += s * T::lit(WG[j / 2]);
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel<T> {
    pub a: T,
    pub b: T,
    pub integral: T,
    pub error: T,
}

/// Globally adaptive subdivision of `[a, b]` until the summed error estimate is
/// below `max(abs_tol, rel_tol * |I|)` or `max_panels` is reached. Panels are
/// returned sorted by left endpoint.
pub fn adaptive_panels<T, F>(mut f: F, a: T, b: T, rel_tol: T, abs_tol: T, max_panels: usize) -> Vec<Panel<T>>
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    let (i0, e0) = gk15(&mut f, a, b);
    let mut panels = vec![Panel {
        a,
        b,
        integral: i0,
        error: e0,
    }];
    loop {
        let total: T = panels.iter().map(|p| p.integral).sum();
        let err: T = panels.iter().map(|p| p.error).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) || panels.len() >= max_panels {
            break;
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |acc, (i, p)| if p.error > acc.1 { (i, p.error) } else { acc });
        let p = panels.swap_remove(worst);
        let mid = p.a + (p.b - p.a) / T::lit(2.0);
        if mid == p.a || mid == p.b {
            // cannot split further; freeze this panel
            panels.push(Panel { error: T::zero(), ..p });
            continue;
        }
        for (lo, hi) in [(p.a, mid), (mid, p.b)] {
            let (i, e) = gk15(&mut f, lo, hi);
            panels.push(Panel {
                a: lo,
                b: hi,
                integral: i,
                error: e,
            });
        }
    }
    panels.sort_by(|x, y| x.a.partial_cmp(&y.a).expect("finite panel endpoints"));
    panels
}

pub fn integrate<T, F>(f: F, a: T, b: T, rel_tol: T, abs_tol: T) -> T
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    adaptive_panels(f, a, b, rel_tol, abs_tol, 4000)
        .iter()
        .map(|p| p.integral)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let (v, _) = gk15(&mut |x: f64| x.powi(7) - 3.0 * x * x, 0.0, 2.0);
        assert!((v - (256.0 / 8.0 - 8.0)).abs() < 1e-12);
    }

    #[test]
    fn adaptive_peak() {
        let f = |x: f64| 1.0 / (1e-4 + x * x);
        let v = integrate(f, -1.0, 1.0, 1e-12, 0.0);
        let exact = 2.0 * (1.0 / 1e-2) * (1.0f64 / 1e-2).atan();
        assert!((v - exact).abs() < 1e-9 * exact);
    }
}
