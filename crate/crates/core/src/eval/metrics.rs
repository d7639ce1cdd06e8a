use crate::error::{Error, Result};

/// Streaming first and second moments of a paired sample, mergeable across
/// partitions.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean_x: f64,
    pub mean_y: f64,
    pub m2_x: f64,
    pub m2_y: f64,
    pub c_xy: f64,
    pub sum_sq_err: f64,
    pub sum_abs_err: f64,
}

impl Moments {
    /// Pairs `(pred, obs)` over the pixels where `mask` is set.
    pub fn from_pairs(pred: &[f64], obs: &[f64], mask: &[bool]) -> Self {
        let mut m = Moments::default();
        for ((&x, &y), &ok) in pred.iter().zip(obs).zip(mask) {
            if ok {
                m.push(x, y);
            }
        }
        m
    }

    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        let n = self.n as f64;
        let dx = x - self.mean_x;
        let dy = y - self.mean_y;
        self.mean_x += dx / n;
        self.mean_y += dy / n;
        self.m2_x += dx * (x - self.mean_x);
        self.m2_y += dy * (y - self.mean_y);
        self.c_xy += dx * (y - self.mean_y);
        let e = x - y;
        self.sum_sq_err += e * e;
        self.sum_abs_err += e.abs();
    }

    /// Pooled moments of two disjoint partitions.
    pub fn merge(&mut self, o: &Moments) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let (na, nb) = (self.n as f64, o.n as f64);
        let n = na + nb;
        let dx = o.mean_x - self.mean_x;
        let dy = o.mean_y - self.mean_y;
        self.m2_x += o.m2_x + dx * dx * na * nb / n;
        self.m2_y += o.m2_y + dy * dy * na * nb / n;
        self.c_xy += o.c_xy + dx * dy * na * nb / n;
        self.mean_x += dx * nb / n;
        self.mean_y += dy * nb / n;
        self.n += o.n;
        self.sum_sq_err += o.sum_sq_err;
        self.sum_abs_err += o.sum_abs_err;
    }

    /// Pearson R, or `None` with fewer than two pixels or zero variance.
    pub fn corr(&self) -> Option<f64> {
        if self.n < 2 || self.m2_x <= 0.0 || self.m2_y <= 0.0 {
            return None;
        }
        Some((self.c_xy / (self.m2_x.sqrt() * self.m2_y.sqrt())).clamp(-1.0, 1.0))
    }

    pub fn rmse(&self) -> Option<f64> {
        (self.n > 0).then(|| (self.sum_sq_err / self.n as f64).sqrt())
    }

    pub fn mae(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum_abs_err / self.n as f64)
    }
}

fn check(x: &[f64], y: &[f64], mask: &[bool]) {
    assert_eq!(x.len(), y.len(), "metric operands differ in length");
    assert_eq!(x.len(), mask.len(), "mask length");
}

/// Pearson correlation over the masked pixels; `Ok(None)` when undefined.
pub fn corr(x: &[f64], y: &[f64], mask: &[bool]) -> Result<Option<f64>> {
    check(x, y, mask);
    let m = Moments::from_pairs(x, y, mask);
    if m.n == 0 {
        return Err(Error::EmptyMask("corr"));
    }
    Ok(m.corr())
}

pub fn rmse(x: &[f64], y: &[f64], mask: &[bool]) -> Result<f64> {
    check(x, y, mask);
    Moments::from_pairs(x, y, mask).rmse().ok_or(Error::EmptyMask("rmse"))
}

pub fn mae(x: &[f64], y: &[f64], mask: &[bool]) -> Result<f64> {
    check(x, y, mask);
    Moments::from_pairs(x, y, mask).mae().ok_or(Error::EmptyMask("mae"))
}

/// Drift metric: the mean of the metric on the u and v components.
pub fn siv_metric(
    metric: impl Fn(&[f64], &[f64], &[bool]) -> Result<f64>,
    pred_u: &[f64],
    pred_v: &[f64],
    obs_u: &[f64],
    obs_v: &[f64],
    mask: &[bool],
) -> Result<f64> {
    Ok(0.5 * (metric(pred_u, obs_u, mask)? + metric(pred_v, obs_v, mask)?))
}
