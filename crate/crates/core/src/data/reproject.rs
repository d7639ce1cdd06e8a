/// A regular source grid: node `(i, j)` sits at `(x0 + j dx, y0 + i dy)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridGeometry {
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub height: usize,
    pub width: usize,
}

impl GridGeometry {
    /// Unit spacing from the origin, so coordinates are fractional indices.
    pub fn index_space(height: usize, width: usize) -> Self {
        GridGeometry {
            x0: 0.0,
            y0: 0.0,
            dx: 1.0,
            dy: 1.0,
            height,
            width,
        }
    }

    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x0 + j as f64 * self.dx, self.y0 + i as f64 * self.dy)
    }
}

/// Handling of sample points outside the source nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Out-of-hull points are invalid.
    Invalid,
    /// Coordinates are clamped to the edge.
    Clamp,
    /// The grid wraps in both directions.
    Periodic,
}

/// Bracketing indices and the fractional offset along one axis.
fn bracket(f: f64, n: usize, boundary: Boundary) -> Option<(usize, usize, f64)> {
    let last = (n - 1) as f64;
    match boundary {
        Boundary::Invalid | Boundary::Clamp => {
            let f = if boundary == Boundary::Clamp {
                f.clamp(0.0, last)
            } else if (0.0..=last).contains(&f) {
                f
            } else {
                return None;
            };
            let i0 = (f.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            Some((i0, i1, f - i0 as f64))
        }
        Boundary::Periodic => {
            let nf = n as f64;
            let w = f.rem_euclid(nf);
            let i0 = (w.floor() as usize).min(n - 1);
            Some((i0, (i0 + 1) % n, w - i0 as f64))
        }
    }
}

/// Bilinear interpolation of a row-major source field at `(x, y)`.
///
/// Returns `None` when the point is out of hull under [`Boundary::Invalid`]
/// or when a node carrying nonzero weight is invalid.
pub fn bilinear_sample(
    values: &[f64],
    valid: Option<&[bool]>,
    geom: &GridGeometry,
    x: f64,
    y: f64,
    boundary: Boundary,
) -> Option<f64> {
    let (j0, j1, tx) = bracket((x - geom.x0) / geom.dx, geom.width, boundary)?;
    let (i0, i1, ty) = bracket((y - geom.y0) / geom.dy, geom.height, boundary)?;
    let w = geom.width;
    if let Some(valid) = valid {
        let nodes = [
            (i0, j0, (1.0 - ty) * (1.0 - tx)),
            (i0, j1, (1.0 - ty) * tx),
            (i1, j0, ty * (1.0 - tx)),
            (i1, j1, ty * tx),
        ];
        if nodes.iter().any(|&(i, j, wt)| wt > 0.0 && !valid[i * w + j]) {
            return None;
        }
    }
    let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a + t * (b - a) };
    let top = lerp(values[i0 * w + j0], values[i0 * w + j1], tx);
    let bottom = lerp(values[i1 * w + j0], values[i1 * w + j1], tx);
    Some(lerp(top, bottom, ty))
}

/// Resamples a source field onto arbitrary destination points.
///
/// Returns the values (0 where invalid) and the validity of each point.
pub fn bilinear_reproject(
    values: &[f64],
    valid: Option<&[bool]>,
    geom: &GridGeometry,
    dst_x: &[f64],
    dst_y: &[f64],
) -> (Vec<f64>, Vec<bool>) {
    assert_eq!(values.len(), geom.height * geom.width, "source grid size");
    assert_eq!(dst_x.len(), dst_y.len(), "destination coordinate lengths");
    dst_x
        .iter()
        .zip(dst_y)
        .map(|(&x, &y)| match bilinear_sample(values, valid, geom, x, y, Boundary::Invalid) {
            Some(v) => (v, true),
            None => (0.0, false),
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn geom() -> GridGeometry {
        GridGeometry {
            x0: -100.0,
            y0: 50.0,
            dx: 25.0,
            dy: 12.5,
            height: 7,
            width: 9,
        }
    }

    fn node_coords(g: &GridGeometry) -> (Vec<f64>, Vec<f64>) {
        (0..g.height * g.width)
            .map(|k| g.node(k / g.width, k % g.width))
            .unzip()
    }

    #[test]
    fn identity_mapping() {
        let g = geom();
        let vals: Vec<f64> = (0..63).map(|k| (k as f64 * 0.37).sin()).collect();
        let (xs, ys) = node_coords(&g);
        let (out, ok) = bilinear_reproject(&vals, None, &g, &xs, &ys);
        assert_eq!(out, vals);
        assert!(ok.iter().all(|&v| v));
    }

    #[test]
    fn constant_field() {
        let g = geom();
        let vals = vec![3.25; 63];
        let xs: Vec<f64> = (0..40).map(|k| -100.0 + k as f64 * 4.9).collect();
        let ys: Vec<f64> = (0..40).map(|k| 50.0 + k as f64 * 1.7).collect();
        let (out, ok) = bilinear_reproject(&vals, None, &g, &xs, &ys);
        assert!(ok.iter().all(|&v| v));
        assert!(out.iter().all(|&v| v == 3.25));
    }

    #[test]
    fn planar_field_reproduced() {
        let g = geom();
        let plane = |x: f64, y: f64| 0.3 * x - 1.7 * y + 4.0;
        let (nx, ny) = node_coords(&g);
        let vals: Vec<f64> = nx.iter().zip(&ny).map(|(&x, &y)| plane(x, y)).collect();
        let xs: Vec<f64> = (0..50).map(|k| -99.0 + k as f64 * 3.9).collect();
        let ys: Vec<f64> = (0..50).map(|k| 51.0 + (k as f64 * 1.61) % 70.0).collect();
        let (out, ok) = bilinear_reproject(&vals, None, &g, &xs, &ys);
        for k in 0..50 {
            assert!(ok[k]);
            assert!((out[k] - plane(xs[k], ys[k])).abs() < 1e-10);
        }
    }

    #[test]
    fn invalid_nodes_and_hull() {
        let g = GridGeometry::index_space(3, 3);
        let vals = vec![1.0; 9];
        let mut valid = vec![true; 9];
        valid[4] = false;
        assert_eq!(bilinear_sample(&vals, Some(&valid), &g, 0.5, 0.5, Boundary::Invalid), None);
        assert_eq!(bilinear_sample(&vals, Some(&valid), &g, 0.0, 0.0, Boundary::Invalid), Some(1.0));
        assert_eq!(bilinear_sample(&vals, None, &g, -0.1, 1.0, Boundary::Invalid), None);
        assert_eq!(bilinear_sample(&vals, None, &g, -0.1, 1.0, Boundary::Clamp), Some(1.0));
    }

    #[test]
    fn periodic_wraps() {
        let g = GridGeometry::index_space(1, 4);
        let vals = vec![0.0, 1.0, 2.0, 3.0];
        let v = bilinear_sample(&vals, None, &g, 3.5, 0.0, Boundary::Periodic).unwrap();
        assert!((v - 1.5).abs() < 1e-15);
        let v = bilinear_sample(&vals, None, &g, -0.25, 0.0, Boundary::Periodic).unwrap();
        assert!((v - 0.75).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn stays_within_node_range(
            vals in proptest::collection::vec(-10.0f64..10.0, 16),
            x in 0.0f64..3.0,
            y in 0.0f64..3.0,
        ) {
            let g = GridGeometry::index_space(4, 4);
            let v = bilinear_sample(&vals, None, &g, x, y, Boundary::Invalid).unwrap();
            let (i, j) = (y.floor() as usize, x.floor() as usize);
            let nodes = [vals[i * 4 + j], vals[i * 4 + j + 1], vals[(i + 1) * 4 + j], vals[(i + 1) * 4 + j + 1]];
            let lo = nodes.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = nodes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }
}
