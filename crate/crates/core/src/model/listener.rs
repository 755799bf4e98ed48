use alloc::format;
use alloc::vec::Vec;

use super::LasModel;
use crate::error::{Error, Result};
use crate::numerics::{LstmCell, Tape, Tensor, Var};

/// Encoder length after `layers` pyramid reductions: `ceil(T / 2)` per layer.
pub fn listener_length(frames: usize, layers: usize) -> usize {
    (0..layers).fold(frames, |t, _| t.div_ceil(2))
}

/// Concatenates consecutive row pairs (`[T, C]` to `[ceil(T/2), 2C]`),
/// zero-padding an odd final row.
fn pair_frames(tape: &mut Tape<'_>, x: Var) -> Result<Var> {
    let (t, c) = tape.value(x).dims2();
    let even = if t % 2 == 1 {
        let pad = tape.constant(Tensor::zeros(&[1, c]));
        tape.concat_rows(&[x, pad])?
    } else {
        x
    };
    tape.reshape(even, &[t.div_ceil(2), 2 * c])
}

fn blstm(tape: &mut Tape<'_>, x: Var, prefix: &str) -> Result<Var> {
    let fwd = LstmCell::bind(tape, &format!("{prefix}.fwd"))?;
    let bwd = LstmCell::bind(tape, &format!("{prefix}.bwd"))?;
    let t_len = tape.value(x).rows();
    let zero = tape.constant(Tensor::zeros(&[1, fwd.hidden]));

    let run = |tape: &mut Tape<'_>, cell: &LstmCell, order: &mut dyn Iterator<Item = usize>| -> Result<Vec<Var>> {
        let proj = cell.project_input(tape, x)?;
        let mut outs: Vec<Option<Var>> = alloc::vec![None; t_len];
        let (mut h, mut c) = (zero, zero);
        for t in order {
            let xp = tape.slice_rows(proj, t, 1)?;
            (h, c) = cell.step_projected(tape, xp, h, c)?;
            outs[t] = Some(h);
        }
        Ok(outs.into_iter().map(Option::unwrap).collect())
    };
    let f = run(tape, &fwd, &mut (0..t_len))?;
    let b = run(tape, &bwd, &mut (0..t_len).rev())?;
    let f = tape.concat_rows(&f)?;
    let b = tape.concat_rows(&b)?;
    tape.concat_cols(&[f, b])
}

/// Pyramid BLSTM encoder over `feats: [T, D]`, giving `[U, 2H]`.
///
/// Every layer first pairs consecutive frames, then runs a bidirectional
/// LSTM, so `U = listener_length(T, layers)`.
pub fn listen_on(tape: &mut Tape<'_>, model: &LasModel, feats: Var) -> Result<Var> {
    let (t, d) = tape.value(feats).dims2();
    if t == 0 || tape.value(feats).is_empty() {
        return Err(Error::invalid("listener input has no frames"));
    }
    if d != model.config.feature_dim {
        return Err(Error::invalid(format!(
            "features are {d}-dimensional, model expects {}",
            model.config.feature_dim
        )));
    }
    let mut cur = feats;
    for l in 0..model.config.listener_layers {
        cur = pair_frames(tape, cur)?;
        cur = blstm(tape, cur, &format!("listener.layer{l}"))?;
    }
    Ok(cur)
}

/// Forward-only encoder.
pub fn listen(model: &LasModel, feats: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::with_params(&model.params);
    let x = tape.constant_ref(feats);
    let h = listen_on(&mut tape, model, x)?;
    Ok(tape.value(h).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LasConfig, LasModel};
    use crate::numerics::Prng;

    fn tiny(layers: usize) -> LasModel {
        let cfg = LasConfig {
            feature_dim: 2,
            listener_layers: layers,
            listener_hidden: 3,
            speller_layers: 1,
            speller_hidden: 2,
            embed_dim: 2,
            attention_dim: 2,
            conv_filters: 1,
            conv_width: 3,
            vocab_size: 6,
            ..LasConfig::default()
        };
        LasModel::new(cfg, &mut Prng::new(1)).unwrap()
    }

    #[test]
    fn length_examples() {
        assert_eq!(listener_length(32, 3), 4);
        assert_eq!(listener_length(33, 3), 5);
        assert_eq!(listener_length(1, 3), 1);
    }

    #[test]
    fn output_shape_matches_formula() {
        let m = tiny(3);
        for t in [1, 2, 7, 32, 33] {
            let x = Tensor::full(&[t, 2], 0.1);
            let h = listen(&m, &x).unwrap();
            assert_eq!(h.shape(), &[listener_length(t, 3), 6], "T={t}");
        }
    }

    #[test]
    fn rejects_wrong_width() {
        let m = tiny(1);
        assert!(listen(&m, &Tensor::zeros(&[4, 3])).is_err());
    }

    #[test]
    fn bidirectional_halves_see_opposite_context() {
        // Changing the last frame must alter the backward half at row 0.
        let m = tiny(1);
        let a = Tensor::full(&[4, 2], 0.2);
        let mut b = a.clone();
        b.data_mut()[7] = 3.0;
        let ha = listen(&m, &a).unwrap();
        let hb = listen(&m, &b).unwrap();
        assert_eq!(ha.row_slice(0)[..3], hb.row_slice(0)[..3]);
        assert_ne!(ha.row_slice(0)[3..], hb.row_slice(0)[3..]);
    }
}
