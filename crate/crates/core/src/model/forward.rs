use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::norm::{instance_normalize, InstanceStats};
use crate::model::{cov_loss, record_cov_loss, UCastConfig, Variant};
use crate::numeric::{Matrix, ParamId, ParamSet, Tape, Var};
use crate::rng::SeededRng;
use crate::training::{mse, Forecaster, Recorded};

const INIT_STD: f64 = 0.02;
const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
struct Projections {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct EncoderLayer {
    query: ParamId,
    proj: Projections,
    gain: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
enum Decoder {
    /// Indexed by `ℓ - 1`; layer `ℓ` maps `U^ℓ` to `U^{ℓ-1}`.
    Attention(Vec<Projections>),
    /// `C × C_L` map restoring the channel axis.
    Restore(ParamId),
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardTrace {
    pub stats: InstanceStats,
    pub normalized_input: Matrix,
    /// `H⁰ .. H^L`.
    pub h: Vec<Matrix>,
    /// `U⁰ .. U^L`.
    pub u: Vec<Matrix>,
    /// Head-averaged encoder attention, `C_ℓ × C_{ℓ-1}` for `ℓ = 1..L`.
    pub down_attention: Vec<Matrix>,
    /// Head-averaged decoder attention, `C_{ℓ-1} × C_ℓ` for `ℓ = 1..L`.
    pub up_attention: Vec<Matrix>,
    pub prediction_normalized: Matrix,
    pub prediction: Matrix,
}

impl ForwardTrace {
    /// Latent representations whose covariance is regularized, `H¹ .. H^L`.
    pub fn encoder_outputs(&self) -> &[Matrix] {
        &self.h[1..]
    }
}

/// MSE against `y` plus `α` times the mean covariance loss over encoder levels.
pub fn total_loss(trace: &ForwardTrace, y: &Matrix, config: &UCastConfig) -> Result<f64> {
    let mut loss = mse(&trace.prediction, y)?;
    let alpha = config.effective_alpha();
    if alpha > 0.0 {
        let levels = trace.encoder_outputs();
        let mut sum = 0.0;
        for h in levels {
            sum += cov_loss(h, config.eps_cov)?;
        }
        loss += alpha * sum / levels.len() as f64;
    }
    Ok(loss)
}

struct Recording {
    stats: InstanceStats,
    normalized_input: Var,
    h: Vec<Var>,
    u: Vec<Var>,
    down: Vec<Vec<Var>>,
    up: Vec<Vec<Var>>,
    normalized: Var,
    prediction: Var,
    regularizer: Option<Var>,
}

#[derive(Debug, Clone)]
pub struct UCastModel {
    config: UCastConfig,
    ladder: Vec<usize>,
    params: ParamSet,
    w_in: ParamId,
    encoder: Vec<EncoderLayer>,
    f_pred: ParamId,
    decoder: Decoder,
    w_out: ParamId,
}

impl UCastModel {
    /// Builds the parameter layout for the configured variant and draws the
    /// initial values.
    pub fn new(config: UCastConfig) -> Result<Self> {
        config.validate()?;
        let ladder = config.ladder();
        let d = config.d_model;
        let mut rng = SeededRng::new(config.seed);
        let mut params = ParamSet::new();
        let mut normal = |params: &mut ParamSet, name: String, rows: usize, cols: usize| {
            params.add(name, rng.normal_matrix(rows, cols, INIT_STD))
        };
        let w_in = normal(&mut params, "w_in".into(), config.lookback, d);
        let mut encoder = Vec::with_capacity(ladder.len());
        for (l, &c_l) in ladder.iter().enumerate() {
            let l = l + 1;
            let query = normal(&mut params, format!("enc{l}.query"), c_l, d);
            let proj = Projections {
                wq: normal(&mut params, format!("enc{l}.wq"), d, d),
                wk: normal(&mut params, format!("enc{l}.wk"), d, d),
                wv: normal(&mut params, format!("enc{l}.wv"), d, d),
                wo: normal(&mut params, format!("enc{l}.wo"), d, d),
            };
            let gain = params.add(format!("enc{l}.ln_gain"), Matrix::filled(1, d, 1.0));
            let bias = params.add(format!("enc{l}.ln_bias"), Matrix::zeros(1, d));
            encoder.push(EncoderLayer {
                query,
                proj,
                gain,
                bias,
            });
        }
        let f_pred = normal(&mut params, "f_pred".into(), d, d);
        let decoder = if config.variant == Variant::NoUpsampling {
            let c_last = *ladder.last().expect("at least one level");
            Decoder::Restore(normal(&mut params, "restore".into(), config.channels, c_last))
        } else {
            Decoder::Attention(
                (1..=ladder.len())
                    .map(|l| Projections {
                        wq: normal(&mut params, format!("dec{l}.wq"), d, d),
                        wk: normal(&mut params, format!("dec{l}.wk"), d, d),
                        wv: normal(&mut params, format!("dec{l}.wv"), d, d),
                        wo: normal(&mut params, format!("dec{l}.wo"), d, d),
                    })
                    .collect(),
            )
        };
        let w_out = normal(&mut params, "w_out".into(), d, config.horizon);
        Ok(Self {
            config,
            ladder,
            params,
            w_in,
            encoder,
            f_pred,
            decoder,
            w_out,
        })
    }

    pub fn config(&self) -> &UCastConfig {
        &self.config
    }

    /// Latent channel counts `C₁ .. C_L` in use.
    pub fn ladder(&self) -> &[usize] {
        &self.ladder
    }

    /// Latent query blocks, one per encoder level.
    pub fn query_ids(&self) -> Vec<ParamId> {
        self.encoder.iter().map(|e| e.query).collect()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        let want = (self.config.channels, self.config.lookback);
        if x.shape() != want {
            return Err(Error::shape(
                "forward",
                format!("input {:?}, expected {want:?}", x.shape()),
            ));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite {
                context: "model input".into(),
            });
        }
        Ok(())
    }

    fn attention(
        &self,
        params: &ParamSet,
        tape: &mut Tape,
        queries: Var,
        keys: Var,
        p: Projections,
    ) -> Result<(Var, Vec<Var>)> {
        let heads = self.config.heads;
        let dh = self.config.head_dim();
        let wq = tape.param(p.wq, params.get(p.wq));
        let wk = tape.param(p.wk, params.get(p.wk));
        let wv = tape.param(p.wv, params.get(p.wv));
        let wo = tape.param(p.wo, params.get(p.wo));
        let q = tape.matmul(queries, wq)?;
        let k = tape.matmul(keys, wk)?;
        let v = tape.matmul(keys, wv)?;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut maps = Vec::with_capacity(heads);
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q, k, v)
            } else {
                (
                    tape.col_slice(q, h * dh, dh)?,
                    tape.col_slice(k, h * dh, dh)?,
                    tape.col_slice(v, h * dh, dh)?,
                )
            };
            let scores = tape.matmul_bt(qh, kh)?;
            let scores = tape.scale(scores, scale);
            let a = tape.softmax_rows(scores)?;
            outs.push(tape.matmul(a, vh)?);
            maps.push(a);
        }
        let joined = if heads == 1 { outs[0] } else { tape.concat_cols(&outs)? };
        Ok((tape.matmul(joined, wo)?, maps))
    }

    fn record_embed(&self, params: &ParamSet, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(self.w_in, params.get(self.w_in));
        tape.matmul(x, w)
    }

    fn record_down(&self, params: &ParamSet, tape: &mut Tape, layer: usize, prev: Var) -> Result<(Var, Vec<Var>)> {
        let e = self.encoder[layer - 1];
        let q = tape.param(e.query, params.get(e.query));
        let (mixed, maps) = self.attention(params, tape, q, prev, e.proj)?;
        let gain = tape.param(e.gain, params.get(e.gain));
        let bias = tape.param(e.bias, params.get(e.bias));
        let h = tape.layer_norm(mixed, gain, bias, LN_EPS)?;
        finite(tape, h, || format!("encoder layer {layer}"))?;
        Ok((h, maps))
    }

    fn record_align(&self, params: &ParamSet, tape: &mut Tape, h_last: Var) -> Result<Var> {
        let f = tape.param(self.f_pred, params.get(self.f_pred));
        tape.matmul(h_last, f)
    }

    fn record_up(
        &self,
        params: &ParamSet,
        tape: &mut Tape,
        layer: usize,
        skip: Var,
        u: Var,
    ) -> Result<(Var, Vec<Var>)> {
        let Decoder::Attention(layers) = &self.decoder else {
            return Err(Error::Parameter("variant has no upsampling attention".into()));
        };
        let (mixed, maps) = self.attention(params, tape, skip, u, layers[layer - 1])?;
        let out = tape.add(mixed, skip)?;
        finite(tape, out, || format!("decoder layer {layer}"))?;
        Ok((out, maps))
    }

    fn record_output(&self, params: &ParamSet, tape: &mut Tape, u0: Var, h0: Var) -> Result<Var> {
        let sum = tape.add(u0, h0)?;
        let w = tape.param(self.w_out, params.get(self.w_out));
        tape.matmul(sum, w)
    }

    fn record_all(&self, params: &ParamSet, tape: &mut Tape, input: &Matrix) -> Result<Recording> {
        self.check_input(input)?;
        let (xn, stats) = instance_normalize(input);
        let x = tape.constant(xn);
        let levels = self.ladder.len();
        let mut h = vec![self.record_embed(params, tape, x)?];
        let mut down = Vec::with_capacity(levels);
        for l in 1..=levels {
            let (next, maps) = self.record_down(params, tape, l, h[l - 1])?;
            h.push(next);
            down.push(maps);
        }
        let mut u = vec![x; levels + 1];
        u[levels] = self.record_align(params, tape, h[levels])?;
        let mut up = vec![Vec::new(); levels];
        match &self.decoder {
            Decoder::Attention(_) => {
                for l in (1..=levels).rev() {
                    let (next, maps) = self.record_up(params, tape, l, h[l - 1], u[l])?;
                    u[l - 1] = next;
                    up[l - 1] = maps;
                }
            }
            Decoder::Restore(id) => {
                let r = tape.param(*id, params.get(*id));
                u[0] = tape.matmul(r, u[levels])?;
                // Intermediate levels are skipped by this variant.
                u[1..levels].copy_from_slice(&h[1..levels]);
                up.clear();
            }
        }
        let normalized = self.record_output(params, tape, u[0], h[0])?;
        let scaled = tape.scale_rows(normalized, stats.std.clone())?;
        let mean = tape.constant(Matrix::from_vec(stats.mean.len(), 1, stats.mean.clone())?);
        let prediction = tape.add_col_bias(scaled, mean)?;
        finite(tape, prediction, || "prediction".to_string())?;

        let alpha = self.config.effective_alpha();
        let regularizer = if alpha > 0.0 {
            let terms = (1..=levels)
                .map(|l| record_cov_loss(tape, h[l], self.config.eps_cov))
                .collect::<Result<Vec<_>>>()?;
            let sum = tape.add_scalars(&terms)?;
            Some(tape.scale(sum, alpha / levels as f64))
        } else {
            None
        };
        Ok(Recording {
            stats,
            normalized_input: x,
            h,
            u,
            down,
            up,
            normalized,
            prediction,
            regularizer,
        })
    }

    /// Full forward pass with the model's own parameters.
    pub fn forward(&self, input: &Matrix) -> Result<ForwardTrace> {
        self.forward_with(&self.params, input)
    }

    pub fn forward_with(&self, params: &ParamSet, input: &Matrix) -> Result<ForwardTrace> {
        let mut tape = Tape::new();
        let r = self.record_all(params, &mut tape, input)?;
        let v = |x: Var| tape.value(x).clone();
        Ok(ForwardTrace {
            stats: r.stats,
            normalized_input: v(r.normalized_input),
            h: r.h.iter().map(|&x| v(x)).collect(),
            u: r.u.iter().map(|&x| v(x)).collect(),
            down_attention: r.down.iter().map(|m| average(&tape, m)).collect(),
            up_attention: r.up.iter().map(|m| average(&tape, m)).collect(),
            prediction_normalized: v(r.normalized),
            prediction: v(r.prediction),
        })
    }

    /// `H⁰ = X W_in` for an already normalized input.
    pub fn channel_embed(&self, x: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let out = self.record_embed(&self.params, &mut tape, xv)?;
        Ok(tape.value(out).clone())
    }

    /// One encoder level (1-based); returns `H^ℓ` and the head-averaged map.
    pub fn down_attention(&self, layer: usize, prev: &Matrix) -> Result<(Matrix, Matrix)> {
        self.check_layer(layer)?;
        let mut tape = Tape::new();
        let p = tape.constant(prev.clone());
        let (h, maps) = self.record_down(&self.params, &mut tape, layer, p)?;
        Ok((tape.value(h).clone(), average(&tape, &maps)))
    }

    pub fn temporal_align(&self, h_last: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let h = tape.constant(h_last.clone());
        let u = self.record_align(&self.params, &mut tape, h)?;
        Ok(tape.value(u).clone())
    }

    /// One decoder level (1-based): `U^{ℓ-1}` from `H^{ℓ-1}` and `U^ℓ`.
    pub fn up_attention(&self, layer: usize, skip: &Matrix, u: &Matrix) -> Result<(Matrix, Matrix)> {
        self.check_layer(layer)?;
        let mut tape = Tape::new();
        let s = tape.constant(skip.clone());
        let uv = tape.constant(u.clone());
        let (out, maps) = self.record_up(&self.params, &mut tape, layer, s, uv)?;
        Ok((tape.value(out).clone(), average(&tape, &maps)))
    }

    /// `(U⁰ + H⁰) W_out` in normalized scale.
    pub fn output_project(&self, u0: &Matrix, h0: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let u = tape.constant(u0.clone());
        let h = tape.constant(h0.clone());
        let y = self.record_output(&self.params, &mut tape, u, h)?;
        Ok(tape.value(y).clone())
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer == 0 || layer > self.ladder.len() {
            return Err(Error::Parameter(format!(
                "layer {layer} outside 1..={}",
                self.ladder.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn from_parts(config: UCastConfig, values: &ParamSet) -> Result<Self> {
        let mut model = Self::new(config)?;
        model.params.copy_values_from(values)?;
        Ok(model)
    }
}

fn average(tape: &Tape, maps: &[Var]) -> Matrix {
    let mut acc = tape.value(maps[0]).clone();
    for &m in &maps[1..] {
        acc.add_assign(tape.value(m)).expect("same shape");
    }
    acc.scale(1.0 / maps.len() as f64)
}

fn finite(tape: &Tape, v: Var, context: impl FnOnce() -> String) -> Result<()> {
    if tape.value(v).is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { context: context() })
    }
}

impl Forecaster for UCastModel {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn update_set(&self) -> Vec<ParamId> {
        let frozen = if self.config.variant == Variant::FrozenQuery {
            self.query_ids()
        } else {
            Vec::new()
        };
        self.params.ids().filter(|id| !frozen.contains(id)).collect()
    }

    fn record(&self, params: &ParamSet, tape: &mut Tape, input: &Matrix) -> Result<Recorded> {
        let r = self.record_all(params, tape, input)?;
        Ok(Recorded {
            prediction: r.prediction,
            regularizer: r.regularizer,
        })
    }
}
