//! Nelder–Mead downhill simplex.

#[derive(Debug, Clone)]
pub(crate) struct SimplexOutcome<const N: usize> {
    pub best: [f64; N],
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimises `f` starting from `start` with an axis-aligned initial simplex of
/// `steps`. Stops when every vertex lies within `tol · steps[k]` of the best
/// vertex on every coordinate, or after `max_iterations`.
pub(crate) fn minimize<const N: usize>(
    mut f: impl FnMut(&[f64; N]) -> f64,
    start: [f64; N],
    steps: [f64; N],
    max_iterations: usize,
    tol: f64,
) -> SimplexOutcome<N> {
    const REFLECT: f64 = 1.0;
    const EXPAND: f64 = 2.0;
    const CONTRACT: f64 = 0.5;
    const SHRINK: f64 = 0.5;

    let mut vertices: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    vertices.push((start, f(&start)));
    for k in 0..N {
        let mut p = start;
        p[k] += steps[k];
        vertices.push((p, f(&p)));
    }

    let order = |v: &mut Vec<([f64; N], f64)>| {
        v.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    };
    let combine = |a: &[f64; N], b: &[f64; N], t: f64| -> [f64; N] {
        let mut out = [0.0; N];
        for k in 0..N {
            out[k] = a[k] + t * (b[k] - a[k]);
        }
        out
    };

    let mut iterations = 0;
    let mut converged = false;
    order(&mut vertices);
    while iterations < max_iterations {
        let best = vertices[0].0;
        let small = vertices.iter().all(|(p, _)| {
            (0..N).all(|k| (p[k] - best[k]).abs() <= tol * steps[k].abs())
        });
        if small {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = [0.0; N];
        for (p, _) in &vertices[..N] {
            for k in 0..N {
                centroid[k] += p[k] / N as f64;
            }
        }
        let (worst, f_worst) = vertices[N];
        let f_best = vertices[0].1;
        let f_second = vertices[N - 1].1;

        let reflected = combine(&centroid, &worst, -REFLECT);
        let f_reflected = f(&reflected);
        if f_reflected < f_best {
            let expanded = combine(&centroid, &worst, -EXPAND);
            let f_expanded = f(&expanded);
            vertices[N] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
        } else if f_reflected < f_second {
            vertices[N] = (reflected, f_reflected);
        } else {
            let (target, f_target) = if f_reflected < f_worst {
                (reflected, f_reflected)
            } else {
                (worst, f_worst)
            };
            let contracted = combine(&centroid, &target, CONTRACT);
            let f_contracted = f(&contracted);
            if f_contracted < f_target {
                vertices[N] = (contracted, f_contracted);
            } else {
                let anchor = vertices[0].0;
                for v in vertices.iter_mut().skip(1) {
                    let p = combine(&anchor, &v.0, SHRINK);
                    *v = (p, f(&p));
                }
            }
        }
        order(&mut vertices);
    }

    SimplexOutcome {
        best: vertices[0].0,
        value: vertices[0].1,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_minimum() {
        let target = [1.0, -2.0, 3.0];
        let out = minimize(
            |p: &[f64; 3]| p.iter().zip(target).map(|(a, b)| (a - b) * (a - b) * 2.0).sum(),
            [0.0; 3],
            [1.0; 3],
            2000,
            1e-8,
        );
        assert!(out.converged);
        for k in 0..3 {
            assert!((out.best[k] - target[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn rosenbrock() {
        let out = minimize(
            |p: &[f64; 2]| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2),
            [-1.2, 1.0],
            [0.5, 0.5],
            5000,
            1e-10,
        );
        assert!((out.best[0] - 1.0).abs() < 1e-4 && (out.best[1] - 1.0).abs() < 1e-4, "{:?}", out.best);
    }

    #[test]
    fn iteration_cap_flags_unconverged() {
        let out = minimize(|p: &[f64; 2]| p[0] * p[0] + p[1] * p[1], [10.0, 10.0], [1.0, 1.0], 3, 1e-12);
        assert!(!out.converged);
        assert_eq!(out.iterations, 3);
    }
}
