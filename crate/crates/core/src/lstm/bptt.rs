use super::cell::ForwardCache;
use super::weights::LstmWeights;
use crate::error::{Error, Result};
use crate::kernel::Matrix;

/// Reverse-mode gradients of `Σ_t dL/dy_t · y_t` through the cached forward
/// pass. Dropout masks are replayed from the cache, so the result is the
/// exact gradient of the same stochastic forward computation.
pub fn bptt_gradients(w: &LstmWeights, cache: &ForwardCache, dl_dy: &Matrix) -> Result<LstmWeights> {
    let steps = cache.steps.len();
    let n = w.hidden_size;
    if dl_dy.shape() != (steps, w.output_size) {
        return Err(Error::invalid(format!(
            "dL/dY shape {:?} does not match cache ({steps} steps x {} outputs)",
            dl_dy.shape(),
            w.output_size
        )));
    }
    if cache.initial.hidden.len() != n
        || cache
            .steps
            .first()
            .is_some_and(|s| s.x.len() != w.input_size || s.h.len() != n || s.y.len() != w.output_size)
    {
        return Err(Error::invalid("forward cache shape does not match the weights"));
    }

    let mut grads = w.zeros_like();
    let mut dh_next = vec![0.0; n];
    let mut dc_next = vec![0.0; n];
    let mut dh = vec![0.0; n];
    let mut da = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut dh_prev = vec![0.0; n];

    for t in (0..steps).rev() {
        let s = &cache.steps[t];
        let dy = dl_dy.row(t);
        grads.readout.outer_acc(dy, &s.h);
        for (b, d) in grads.readout_bias.iter_mut().zip(dy) {
            *b += d;
        }

        dh.copy_from_slice(&dh_next);
        w.readout.t_matvec_acc(dy, &mut dh);

        let cell_mask = cache.masks.cell.as_ref().map(|m| m[t].as_slice());
        for j in 0..n {
            let do_ = dh[j] * s.tanh_c[j];
            let dc = dh[j] * s.o[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]) + dc_next[j];
            let g_used = match cell_mask {
                Some(m) => s.g[j] * m[j],
                None => s.g[j],
            };
            let di = dc * g_used;
            let mut dg = dc * s.i[j];
            if let Some(m) = cell_mask {
                dg *= m[j];
            }
            let df = dc * s.c_prev[j];
            dc_next[j] = dc * s.f[j];

            da[0][j] = dg * (1.0 - s.g[j] * s.g[j]);
            da[1][j] = di * s.i[j] * (1.0 - s.i[j]);
            da[2][j] = df * s.f[j] * (1.0 - s.f[j]);
            da[3][j] = do_ * s.o[j] * (1.0 - s.o[j]);
        }

        dh_prev.iter_mut().for_each(|v| *v = 0.0);
        let gates = [&w.cell_input, &w.input_gate, &w.forget_gate, &w.output_gate];
        let grad_gates = [
            &mut grads.cell_input,
            &mut grads.input_gate,
            &mut grads.forget_gate,
            &mut grads.output_gate,
        ];
        for ((gate, ggate), dak) in gates.into_iter().zip(grad_gates).zip(&da) {
            ggate.input.outer_acc(dak, &s.x);
            ggate.recurrent.outer_acc(dak, &s.h_prev);
            for (b, d) in ggate.bias.iter_mut().zip(dak) {
                *b += d;
            }
            gate.recurrent.t_matvec_acc(dak, &mut dh_prev);
        }
        // gradient flows back through the recurrent mask
        if let Some(m) = cache.masks.recurrent.as_ref() {
            for (d, mj) in dh_prev.iter_mut().zip(m) {
                *d *= mj;
            }
        }
        dh_next.copy_from_slice(&dh_prev);
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{forward_sequence, init_weights, DropoutSpec};

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let w = init_weights(2, 3, 1, 1).unwrap();
        let xs = Matrix::from_rows(&vec![vec![0.1, 0.2]; 5]).unwrap();
        let (_, cache) = forward_sequence(&w, &xs, None, &DropoutSpec::NONE, 0).unwrap();
        let g = bptt_gradients(&w, &cache, &Matrix::zeros(5, 1)).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let w = init_weights(2, 3, 1, 1).unwrap();
        let xs = Matrix::from_rows(&vec![vec![0.1, 0.2]; 5]).unwrap();
        let (_, cache) = forward_sequence(&w, &xs, None, &DropoutSpec::NONE, 0).unwrap();
        assert!(bptt_gradients(&w, &cache, &Matrix::zeros(4, 1)).is_err());
        let other = init_weights(2, 4, 1, 1).unwrap();
        assert!(bptt_gradients(&other, &cache, &Matrix::zeros(5, 1)).is_err());
    }
}
