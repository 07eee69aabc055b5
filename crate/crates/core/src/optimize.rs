//! Golden-section maximization on a closed interval.

/// Default absolute tolerance on the argmax.
pub const GOLDEN_TOL: f64 = 1e-6;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub argmax: f64,
    pub value: f64,
    /// The bracket collapsed onto an end of the interval.
    pub at_boundary: bool,
    pub iterations: usize,
}

/// Maximizes a unimodal `f` on `[lo, hi]`. Only comparisons of `f` values are
/// used; ties keep the lower sub-bracket.
pub fn golden_section_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Maximum {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iterations = 0;
    while (b - a) > tol {
        iterations += 1;
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let (mut argmax, mut value) = (mid, f(mid));
    for (x, v) in [(c, fc), (d, fd)] {
        if v > value {
            argmax = x;
            value = v;
        }
    }
    // Bracket collapsed on an end: compare against the end point itself.
    let edge = 2.0 * tol;
    let at_boundary = argmax - lo <= edge || hi - argmax <= edge;
    if at_boundary {
        let end = if argmax - lo <= edge { lo } else { hi };
        let fe = f(end);
        if fe >= value {
            argmax = end;
            value = fe;
        }
    }
    Maximum {
        argmax,
        value,
        at_boundary,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn finds_parabola_vertex() {
        let m = golden_section_max(|x| -(x - 1.3).powi(2), 0.05, 10.0, GOLDEN_TOL);
        assert!((m.argmax - 1.3).abs() < 1e-6);
        assert!(!m.at_boundary);
    }

    #[test]
    fn flags_boundary_maximum() {
        let m = golden_section_max(|x| -x * x, 0.05, 10.0, GOLDEN_TOL);
        assert!(m.at_boundary);
        assert_eq!(m.argmax, 0.05);
        let m = golden_section_max(|x| x, 0.05, 10.0, GOLDEN_TOL);
        assert!(m.at_boundary);
        assert_eq!(m.argmax, 10.0);
    }

    proptest! {
        #[test]
        fn argmax_is_invariant_under_positive_scaling(
            vertex in 0.2f64..9.0,
            scale in 1e-3f64..1e3,
        ) {
            let f = |x: f64| -(x - vertex).powi(2);
            let a = golden_section_max(f, 0.05, 10.0, GOLDEN_TOL);
            let b = golden_section_max(|x| scale * f(x), 0.05, 10.0, GOLDEN_TOL);
            prop_assert!((a.argmax - vertex).abs() < 1e-5);
            prop_assert_eq!(a.argmax, b.argmax);
        }
    }
}
