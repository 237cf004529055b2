use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Matrix, ParamId, ParamSet, Tape, Var};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mechanism {
    /// `⌊C/r⌋` learned queries attending over `C` channel tokens.
    #[serde(rename = "HLQN")]
    Hlqn,
    /// Full self-attention across the `C` channel tokens.
    #[serde(rename = "FlatAttention")]
    Flat,
}

impl Mechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Hlqn => "HLQN",
            Mechanism::Flat => "FlatAttention",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSample {
    pub channels: usize,
    pub d_model: usize,
    pub ratio: usize,
    pub heads: usize,
    pub mechanism: Mechanism,
    /// Median forward+backward wall time.
    pub median_seconds: f64,
    /// Attention score entries per head, computed analytically.
    pub score_entries: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub d_model: usize,
    pub ratio: usize,
    pub heads: usize,
    pub warmup: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            d_model: 64,
            ratio: 16,
            heads: 1,
            warmup: 3,
            repeats: 10,
            seed: 0,
        }
    }
}

/// Score-matrix entries per head for one attention stage.
pub fn score_entries(mechanism: Mechanism, channels: usize, ratio: usize) -> u64 {
    let c = channels as u64;
    match mechanism {
        Mechanism::Hlqn => (channels / ratio).max(1) as u64 * c,
        Mechanism::Flat => c * c,
    }
}

struct Block {
    params: ParamSet,
    query: Option<ParamId>,
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    gain: ParamId,
    bias: ParamId,
}

impl Block {
    fn new(mechanism: Mechanism, channels: usize, opts: &BenchOptions, rng: &mut SeededRng) -> Self {
        let d = opts.d_model;
        let mut params = ParamSet::new();
        let query = (mechanism == Mechanism::Hlqn)
            .then(|| params.add("query", rng.normal_matrix((channels / opts.ratio).max(1), d, 0.02)));
        let mut w = |name: &str| params.add(name, rng.normal_matrix(d, d, 0.02));
        let (wq, wk, wv, wo) = (w("wq"), w("wk"), w("wv"), w("wo"));
        let gain = params.add("gain", Matrix::filled(1, d, 1.0));
        let bias = params.add("bias", Matrix::zeros(1, d));
        Self {
            params,
            query,
            wq,
            wk,
            wv,
            wo,
            gain,
            bias,
        }
    }

    fn record(&self, tape: &mut Tape, tokens: &Matrix, heads: usize) -> Result<Var> {
        let p = &self.params;
        let x = tape.constant(tokens.clone());
        let src = match self.query {
            Some(id) => tape.param(id, p.get(id)),
            None => x,
        };
        let wq = tape.param(self.wq, p.get(self.wq));
        let wk = tape.param(self.wk, p.get(self.wk));
        let wv = tape.param(self.wv, p.get(self.wv));
        let wo = tape.param(self.wo, p.get(self.wo));
        let q = tape.matmul(src, wq)?;
        let k = tape.matmul(x, wk)?;
        let v = tape.matmul(x, wv)?;
        let dh = tokens.cols() / heads;
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
            let s = tape.matmul_bt(qh, kh)?;
            let s = tape.scale(s, 1.0 / (dh as f64).sqrt());
            let a = tape.softmax_rows(s)?;
            outs.push(tape.matmul(a, vh)?);
        }
        let joined = if heads == 1 { outs[0] } else { tape.concat_cols(&outs)? };
        let o = tape.matmul(joined, wo)?;
        let gain = tape.param(self.gain, p.get(self.gain));
        let bias = tape.param(self.bias, p.get(self.bias));
        let n = tape.layer_norm(o, gain, bias, 1e-5)?;
        let sq = tape.square(n);
        Ok(tape.mean(sq))
    }

    fn step(&self, tokens: &Matrix, heads: usize) -> Result<()> {
        let mut tape = Tape::new();
        let loss = self.record(&mut tape, tokens, heads)?;
        std::hint::black_box(tape.backward(loss)?);
        Ok(())
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Times one forward+backward pass of each mechanism per channel count.
/// Runs on the calling thread; warm-up iterations are discarded.
pub fn bench_attention(channels: &[usize], opts: &BenchOptions) -> Result<Vec<CostSample>> {
    if opts.repeats == 0 || opts.ratio < 2 || opts.heads == 0 || !opts.d_model.is_multiple_of(opts.heads) {
        return Err(Error::Parameter(
            "bench needs repeats >= 1, ratio >= 2 and d divisible by heads".into(),
        ));
    }
    let mut rng = SeededRng::new(opts.seed);
    let mut out = Vec::new();
    for &c in channels {
        let tokens = rng.normal_matrix(c, opts.d_model, 1.0);
        for mechanism in [Mechanism::Hlqn, Mechanism::Flat] {
            let block = Block::new(mechanism, c, opts, &mut rng);
            for _ in 0..opts.warmup {
                block.step(&tokens, opts.heads)?;
            }
            let mut times = Vec::with_capacity(opts.repeats);
            for _ in 0..opts.repeats {
                let t0 = Instant::now();
                block.step(&tokens, opts.heads)?;
                times.push(t0.elapsed().as_secs_f64());
            }
            out.push(CostSample {
                channels: c,
                d_model: opts.d_model,
                ratio: opts.ratio,
                heads: opts.heads,
                mechanism,
                median_seconds: median(times),
                score_entries: score_entries(mechanism, c, opts.ratio),
            });
        }
    }
    Ok(out)
}

/// Writes `bench.csv`; ratio columns compare each row with the flat row of
/// the same channel count.
pub fn write_bench_csv(samples: &[CostSample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "C",
        "d",
        "r",
        "heads",
        "mechanism",
        "median_seconds",
        "score_entries",
        "score_ratio",
        "time_ratio",
    ])?;
    for s in samples {
        let flat = samples
            .iter()
            .find(|f| f.mechanism == Mechanism::Flat && f.channels == s.channels);
        let (sr, tr) = match flat {
            Some(f) => (
                (s.score_entries as f64 / f.score_entries as f64).to_string(),
                (s.median_seconds / f.median_seconds).to_string(),
            ),
            None => (String::new(), String::new()),
        };
        w.write_record([
            s.channels.to_string(),
            s.d_model.to_string(),
            s.ratio.to_string(),
            s.heads.to_string(),
            s.mechanism.as_str().to_string(),
            s.median_seconds.to_string(),
            s.score_entries.to_string(),
            sr,
            tr,
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
