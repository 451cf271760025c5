//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates forward values, so it shares no code
//! with [`Tape::backward`].

use super::{ParamStore, Tape, Var};
use crate::error::Result;

/// Smallest magnitude used as the relative-error denominator.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares analytic parameter gradients of `loss_fn` against central
/// differences with step `h`. `loss_fn` must build a scalar loss on a fresh
/// tape from the current store values.
pub fn check_gradients<F>(store: &mut ParamStore, h: f64, loss_fn: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, store)?;
    tape.backward(loss, store)?;
    let analytic: Vec<Vec<f64>> = store.iter().map(|p| p.grad.data().to_vec()).collect();
    store.zero_grads();

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = loss_fn(&mut tape, store)?;
        Ok(tape.value(loss).scalar())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for (pi, id) in ids.into_iter().enumerate() {
        for (k, &a) in analytic[pi].iter().enumerate() {
            let orig = store.value(id).data()[k];
            store.get_mut(id).value.data_mut()[k] = orig + h;
            let plus = eval(store)?;
            store.get_mut(id).value.data_mut()[k] = orig - h;
            let minus = eval(store)?;
            store.get_mut(id).value.data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = store.get(id).name.clone();
                report.worst_index = k;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::numerics::{Activation, Matrix, ParamGroup, SparseAdj};

    fn pseudo(seed: u64, n: usize) -> Vec<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn every_op_passes_finite_differences() {
        let mut store = ParamStore::new();
        let x = store.add("x", ParamGroup::Gnn, Matrix::from_vec(3, 2, pseudo(1, 6)).unwrap());
        let w = store.add("w", ParamGroup::Gnn, Matrix::from_vec(2, 2, pseudo(2, 4)).unwrap());
        let b = store.add("b", ParamGroup::Gnn, Matrix::from_vec(1, 2, pseudo(3, 2)).unwrap());
        let a1 = store.add("a1", ParamGroup::Gnn, Matrix::from_vec(2, 1, pseudo(4, 2)).unwrap());
        let a2 = store.add("a2", ParamGroup::Gnn, Matrix::from_vec(2, 1, pseudo(5, 2)).unwrap());
        let adj = Arc::new(SparseAdj::from_triplets(
            3,
            vec![(0, 0, 1.0), (0, 1, 0.7), (1, 0, 0.7), (1, 1, 1.0), (2, 2, 1.0), (2, 1, 0.3), (1, 2, 0.3)],
        ));
        let loss_fn = |t: &mut Tape, s: &ParamStore| -> Result<Var> {
            let xv = t.param(s, x);
            let wv = t.param(s, w);
            let bv = t.param(s, b);
            let h = t.matmul(xv, wv)?;
            let h = t.add_row(h, bv)?;
            let h = t.spmm(&adj, h)?;
            let h = t.activation(h, Activation::Elu)?;
            let a1v = t.param(s, a1);
            let a2v = t.param(s, a2);
            let d = t.matmul(h, a1v)?;
            let sv = t.matmul(h, a2v)?;
            let e = t.edge_scores(d, sv, &adj)?;
            let e = t.activation(e, Activation::LeakyRelu(0.2))?;
            let alpha = t.segment_softmax(e, &adj)?;
            let h = t.edge_aggregate(alpha, h, &adj)?;
            let h = t.activation(h, Activation::Tanh)?;
            let sm = t.softmax_rows(h)?;
            let h2 = t.mul(h, sm)?;
            let ht = t.transpose(h2)?;
            let back = t.transpose(ht)?;
            let cat = t.concat_cols(back, h)?;
            let mx = t.max_rows(cat)?;
            let mn = t.mean_rows(cat)?;
            let r = t.row(cat, 1)?;
            let s1 = t.add(mx, mn)?;
            let s1 = t.add(s1, r)?;
            let s1 = t.scale(s1, 0.5)?;
            let p = t.activation(s1, Activation::Sigmoid)?;
            let pt = t.transpose(p)?;
            let l = t.bce(pt, &[1.0, 0.0, 1.0, 0.0])?;
            let m = t.mean(h)?;
            let m = t.activation(m, Activation::Relu)?;
            t.add(l, m)
        };
        let report = check_gradients(&mut store, 1e-5, loss_fn).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
        assert_eq!(report.checked, store.num_scalars());
    }
}
