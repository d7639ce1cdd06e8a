use crate::models::ParamSet;
use crate::tensor::GridTensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moments per parameter plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: ParamSet,
    pub v: ParamSet,
    pub step: u64,
}

impl AdamState {
    /// Zero moments shaped like `params`.
    pub fn new(params: &ParamSet) -> Self {
        let mut m = ParamSet::new();
        let mut v = ParamSet::new();
        for (name, t) in params.iter() {
            m.insert(name, GridTensor::zeros(t.shape()));
            v.insert(name, GridTensor::zeros(t.shape()));
        }
        AdamState { m, v, step: 0 }
    }
}

/// One bias-corrected Adam update. `grads` is aligned with `params` entry
/// order; `None` means the parameter received no gradient and is treated as
/// a zero gradient.
pub fn adam_step(params: &mut ParamSet, grads: &[Option<GridTensor>], st: &mut AdamState, lr: f64) {
    assert_eq!(grads.len(), params.len(), "one gradient slot per parameter");
    st.step += 1;
    let t = st.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for ((name, p), g) in params.iter_mut().zip(grads) {
        let m = st.m.get_mut(name).expect("moment for every parameter");
        let m = m.data_mut();
        let v = st.v.get_mut(name).expect("moment for every parameter").data_mut();
        let p = p.data_mut();
        match g {
            Some(g) => {
                for (((pi, mi), vi), &gi) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data()) {
                    *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
                    *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                    *pi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + EPSILON);
                }
            }
            None => {
                for ((pi, mi), vi) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mi *= BETA1;
                    *vi *= BETA2;
                    *pi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + EPSILON);
                }
            }
        }
    }
}
