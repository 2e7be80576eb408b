use rand::Rng;

use crate::error::{check_dim, Result};
use crate::neural::rng::seeded;
use crate::neural::{LstmParams, Matrix, ParamSet};

/// Default half-width of the uniform weight initialisation.
pub const INIT_SCALE: f64 = 0.08;

/// Model sizes: hidden/embedding width K, image feature width D, vocabulary V.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub hidden: usize,
    pub feature: usize,
    pub vocab: usize,
}

/// One LSTM decoder with its image embedding, start token, word embedding
/// and softmax head.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    /// K×D
    pub w_img: Matrix,
    pub b_img: Vec<f64>,
    /// Trainable start-token input.
    pub x_start: Vec<f64>,
    /// K×V; column `w` embeds word `w`.
    pub w_embed: Matrix,
    pub lstm: LstmParams,
    /// V×K
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
}

impl DecoderParams {
    pub fn zeros(dims: Dims) -> Self {
        let Dims {
            hidden: k,
            feature: d,
            vocab: v,
        } = dims;
        Self {
            w_img: Matrix::zeros(k, d),
            b_img: vec![0.0; k],
            x_start: vec![0.0; k],
            w_embed: Matrix::zeros(k, v),
            lstm: LstmParams::zeros(k),
            w_out: Matrix::zeros(v, k),
            b_out: vec![0.0; v],
        }
    }

    fn randomize<R: Rng>(&mut self, scale: f64, rng: &mut R) {
        let k = self.x_start.len();
        let mut fill = |xs: &mut [f64]| {
            for x in xs {
                *x = rng.gen_range(-scale..=scale);
            }
        };
        fill(self.w_img.as_mut_slice());
        fill(&mut self.x_start);
        fill(self.w_embed.as_mut_slice());
        fill(self.w_out.as_mut_slice());
        self.lstm = LstmParams::uniform(k, scale, rng);
    }

    fn validate(&self, dims: Dims) -> Result<()> {
        let Dims {
            hidden: k,
            feature: d,
            vocab: v,
        } = dims;
        check_dim("image embedding rows", k, self.w_img.rows())?;
        check_dim("image embedding cols", d, self.w_img.cols())?;
        check_dim("image embedding bias", k, self.b_img.len())?;
        check_dim("start token", k, self.x_start.len())?;
        check_dim("word embedding rows", k, self.w_embed.rows())?;
        check_dim("word embedding cols", v, self.w_embed.cols())?;
        check_dim("lstm hidden size", k, self.lstm.hidden_size())?;
        self.lstm.validate()?;
        check_dim("output projection rows", v, self.w_out.rows())?;
        check_dim("output projection cols", k, self.w_out.cols())?;
        check_dim("output bias", v, self.b_out.len())
    }

    fn tensors_prefixed<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        out.push((format!("{prefix}.w_img"), self.w_img.as_slice()));
        out.push((format!("{prefix}.b_img"), &self.b_img));
        out.push((format!("{prefix}.x_start"), &self.x_start));
        out.push((format!("{prefix}.w_embed"), self.w_embed.as_slice()));
        for (n, t) in self.lstm.tensors() {
            out.push((format!("{prefix}.lstm.{n}"), t));
        }
        out.push((format!("{prefix}.w_out"), self.w_out.as_slice()));
        out.push((format!("{prefix}.b_out"), &self.b_out));
    }

    fn tensors_prefixed_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        out.push((format!("{prefix}.w_img"), self.w_img.as_mut_slice()));
        out.push((format!("{prefix}.b_img"), &mut self.b_img));
        out.push((format!("{prefix}.x_start"), &mut self.x_start));
        out.push((format!("{prefix}.w_embed"), self.w_embed.as_mut_slice()));
        for (n, t) in self.lstm.tensors_mut() {
            out.push((format!("{prefix}.lstm.{n}"), t));
        }
        out.push((format!("{prefix}.w_out"), self.w_out.as_mut_slice()));
        out.push((format!("{prefix}.b_out"), &mut self.b_out));
    }
}

/// All trainable tensors of the hierarchical model: the phrase decoder, the
/// abbreviated-sentence decoder (its own LSTM weights) and the
/// phrase-indication weights.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiParams {
    pub phrase: DecoderParams,
    pub sentence: DecoderParams,
    /// Indicator weights: score = h · w_indicator.
    pub w_indicator: Vec<f64>,
}

impl PhiParams {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            phrase: DecoderParams::zeros(dims),
            sentence: DecoderParams::zeros(dims),
            w_indicator: vec![0.0; dims.hidden],
        }
    }

    /// Weights uniform in `[-scale, scale]`, biases zero.
    pub fn init(dims: Dims, scale: f64, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut p = Self::zeros(dims);
        p.phrase.randomize(scale, &mut rng);
        p.sentence.randomize(scale, &mut rng);
        for x in &mut p.w_indicator {
            *x = rng.gen_range(-scale..=scale);
        }
        p
    }

    pub fn dims(&self) -> Dims {
        Dims {
            hidden: self.w_indicator.len(),
            feature: self.phrase.w_img.cols(),
            vocab: self.phrase.w_out.rows(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        self.phrase.validate(dims)?;
        self.sentence.validate(dims)
    }

    /// Shape of every tensor in `tensors()` order, as (rows, cols).
    pub fn shapes(&self) -> Vec<(String, (usize, usize))> {
        let Dims {
            hidden: k,
            feature: d,
            vocab: v,
        } = self.dims();
        self.tensors()
            .into_iter()
            .map(|(name, t)| {
                let leaf = name.rsplit('.').next().unwrap_or("");
                let shape = match leaf {
                    "w_indicator" => (k, 1),
                    "w_img" => (k, d),
                    "w_embed" => (k, v),
                    "w_out" => (v, k),
                    "b_out" => (v, 1),
                    s if s.starts_with("w_") || s.starts_with("u_") => (k, k),
                    _ => (t.len(), 1),
                };
                (name, shape)
            })
            .collect()
    }

    /// Mask selecting phrase-decoder tensors (true) vs the rest.
    pub fn phrase_mask(&self) -> Vec<bool> {
        self.tensors()
            .iter()
            .map(|(n, _)| n.starts_with("phrase."))
            .collect()
    }
}

impl ParamSet for PhiParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(30);
        self.phrase.tensors_prefixed("phrase", &mut out);
        self.sentence.tensors_prefixed("sentence", &mut out);
        out.push(("w_indicator".into(), &self.w_indicator));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::with_capacity(30);
        self.phrase.tensors_prefixed_mut("phrase", &mut out);
        self.sentence.tensors_prefixed_mut("sentence", &mut out);
        out.push(("w_indicator".into(), &mut self.w_indicator));
        out
    }
}
