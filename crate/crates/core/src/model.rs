//! Dynamics-model architectures and parameter storage.
//!
//! A model is a stack of same-padded stride-1 convolutions with ReLU between
//! layers and a sigmoid head, plus a skip that concatenates the raw input
//! frame to the features at a fixed depth. Two architectures are provided:
//!
//! * `asi-conv-7` — 7 layers with kernel sizes [5,5,5,7,5,1,1], input
//!   concatenated before the 6th layer.
//! * `small-conv-3` — 3 layers of 3x3 kernels, input concatenated before the
//!   last layer. The desk-scale default.
//!
//! Every forward pass, taped or not, bumps an atomic per-model counter; that
//! counter is the compute axis for all learning curves.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernels;
use crate::tape::{Tape, ValId};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ASIMODEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    AsiConv7,
    SmallConv3,
}

impl Architecture {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "asi-conv-7" => Ok(Architecture::AsiConv7),
            "small-conv-3" => Ok(Architecture::SmallConv3),
            other => Err(Error::Config(format!("unknown architecture `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::AsiConv7 => "asi-conv-7",
            Architecture::SmallConv3 => "small-conv-3",
        }
    }

    /// Per-layer kernel sizes.
    pub fn kernel_sizes(&self) -> &'static [usize] {
        match self {
            Architecture::AsiConv7 => &[5, 5, 5, 7, 5, 1, 1],
            Architecture::SmallConv3 => &[3, 3, 3],
        }
    }

    /// Index of the layer whose input gets the raw frame concatenated.
    pub fn concat_before(&self) -> usize {
        match self {
            Architecture::AsiConv7 => 5,
            Architecture::SmallConv3 => 2,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerSpec {
    in_ch: usize,
    out_ch: usize,
    k: usize,
}

fn layer_specs(arch: Architecture, n_kernels: usize, channels: usize) -> Vec<LayerSpec> {
    let sizes = arch.kernel_sizes();
    let concat = arch.concat_before();
    let n = sizes.len();
    (0..n)
        .map(|i| {
            let mut in_ch = if i == 0 { channels } else { n_kernels };
            if i == concat {
                in_ch += channels;
            }
            let out_ch = if i == n - 1 { channels } else { n_kernels };
            LayerSpec { in_ch, out_ch, k: sizes[i] }
        })
        .collect()
}

#[derive(Debug)]
pub struct DynamicsModel {
    architecture: Architecture,
    n_kernels: usize,
    input_shape: (usize, usize, usize),
    layers: Vec<LayerSpec>,
    param_names: Vec<String>,
    params: Vec<Tensor>,
    forward_count: AtomicU64,
}

/// Construct a model with He-normal kernels and zero biases, seeded
/// deterministically.
pub fn build_model(
    architecture: &str,
    n_kernels: usize,
    input_shape: (usize, usize, usize),
    seed: u64,
) -> Result<DynamicsModel> {
    let arch = Architecture::parse(architecture)?;
    DynamicsModel::new(arch, n_kernels, input_shape, seed)
}

impl DynamicsModel {
    pub fn new(
        arch: Architecture,
        n_kernels: usize,
        input_shape: (usize, usize, usize),
        seed: u64,
    ) -> Result<Self> {
        let (c, h, w) = input_shape;
        if n_kernels == 0 || c == 0 {
            return Err(Error::Config("n_kernels and channel count must be positive".into()));
        }
        let max_k = *arch.kernel_sizes().iter().max().unwrap();
        if h < max_k || w < max_k {
            return Err(Error::Config(format!(
                "{} needs spatial dims >= {max_k}, got {h}x{w}",
                arch.name()
            )));
        }
        let layers = layer_specs(arch, n_kernels, c);
        let mut rng = ChaCha8Rng::seed_from_u64(crate::rng::derive_seed(
            seed,
            crate::rng::stream::MODEL_INIT,
            0,
        ));
        let mut params = Vec::new();
        let mut param_names = Vec::new();
        for (i, spec) in layers.iter().enumerate() {
            let fan_in = (spec.in_ch * spec.k * spec.k) as f64;
            let std = (2.0 / fan_in).sqrt();
            let n = spec.out_ch * spec.in_ch * spec.k * spec.k;
            let data: Vec<f64> =
                (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
            params.push(
                Tensor::from_vec(vec![spec.out_ch, spec.in_ch, spec.k, spec.k], data)?.with_grad(),
            );
            param_names.push(format!("layer{i}.kernels"));
            params.push(Tensor::zeros(vec![spec.out_ch]).with_grad());
            param_names.push(format!("layer{i}.bias"));
        }
        Ok(DynamicsModel {
            architecture: arch,
            n_kernels,
            input_shape,
            layers,
            param_names,
            params,
            forward_count: AtomicU64::new(0),
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn n_kernels(&self) -> usize {
        self.n_kernels
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn parameters(&self) -> &[Tensor] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.zero_grad();
        }
    }

    /// Total forward passes through this model, taped and untaped.
    pub fn forward_count(&self) -> u64 {
        self.forward_count.load(Ordering::Relaxed)
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let (c, h, w) = self.input_shape;
        if shape != [c, h, w] {
            return Err(Error::dim(
                "forward",
                format!("frame shape {shape:?} vs model input {c}x{h}x{w}"),
            ));
        }
        Ok(())
    }

    /// One dynamics step without a tape. Output values are strictly in (0,1).
    pub fn forward(&self, frame: &Tensor) -> Result<Tensor> {
        self.check_input(frame.shape())?;
        self.forward_count.fetch_add(1, Ordering::Relaxed);
        let (c, h, w) = self.input_shape;
        let mut cur = frame.data().to_vec();
        let mut cur_ch = c;
        let n = self.layers.len();
        for (i, spec) in self.layers.iter().enumerate() {
            if i == self.architecture.concat_before() {
                cur.extend_from_slice(frame.data());
                cur_ch += c;
            }
            debug_assert_eq!(cur_ch, spec.in_ch);
            let out = kernels::conv2d_forward(
                &cur,
                (spec.in_ch, h, w),
                self.params[2 * i].data(),
                (spec.out_ch, spec.k, spec.k),
                self.params[2 * i + 1].data(),
                1,
            );
            cur = if i == n - 1 { kernels::sigmoid(&out) } else { kernels::relu(&out) };
            cur_ch = spec.out_ch;
        }
        Tensor::from_vec(vec![c, h, w], cur)
    }

    /// Register this model's parameters as leaves on a tape, in order.
    pub fn register_params(&self, tape: &mut Tape) -> Vec<ValId> {
        self.params.iter().map(|p| tape.leaf(p)).collect()
    }

    /// One taped dynamics step. `param_ids` must come from
    /// [`DynamicsModel::register_params`] on the same tape (individual ids may
    /// be substituted, which is how the gradient checker probes single
    /// parameters).
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        input: ValId,
        param_ids: &[ValId],
    ) -> Result<ValId> {
        self.check_input(tape.shape(input))?;
        if param_ids.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "expected {} parameter ids, got {}",
                self.params.len(),
                param_ids.len()
            )));
        }
        self.forward_count.fetch_add(1, Ordering::Relaxed);
        let n = self.layers.len();
        let mut cur = input;
        for i in 0..n {
            if i == self.architecture.concat_before() {
                cur = tape.concat_channels(cur, input)?;
            }
            let conv = tape.conv2d(cur, param_ids[2 * i], param_ids[2 * i + 1], 1)?;
            cur = if i == n - 1 { tape.sigmoid(conv) } else { tape.relu(conv) };
        }
        Ok(cur)
    }

    // ── Checkpoint I/O ───────────────────────────────────────────────

    /// Write the parameter checkpoint: magic, then per parameter the name
    /// (u16 LE length + UTF-8), rank (u8), dims (u32 LE), f32 LE row-major
    /// values.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        for (name, p) in self.param_names.iter().zip(&self.params) {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(p.shape().len() as u8);
            for &d in p.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in p.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Read a checkpoint back. The file stores channel counts and kernel
    /// shapes but not spatial dims, so the caller supplies `(h, w)` (e.g.
    /// from the dataset being evaluated).
    pub fn load(path: &Path, spatial: (usize, usize)) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let mut reader = CheckpointReader { bytes: &bytes, pos: 0 };
        reader.expect_magic()?;
        let mut parsed: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
        while !reader.done() {
            parsed.push(reader.read_param()?);
        }
        if parsed.is_empty() {
            return Err(Error::format(8, "checkpoint contains no parameters"));
        }
        if parsed.len() % 2 != 0 {
            return Err(Error::format(
                reader.pos as u64,
                format!("expected kernel/bias pairs, got {} parameters", parsed.len()),
            ));
        }

        let n_layers = parsed.len() / 2;
        let mut kernel_shapes = vec![None; n_layers];
        for (name, shape, _) in &parsed {
            if let Some(idx) = name.strip_prefix("layer").and_then(|s| {
                s.strip_suffix(".kernels").and_then(|n| n.parse::<usize>().ok())
            }) {
                if idx < n_layers {
                    kernel_shapes[idx] = Some(shape.clone());
                }
            }
        }
        let kernel_shapes: Vec<Vec<usize>> = kernel_shapes
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::format(8, "missing layer kernel parameters"))?;

        let sizes: Vec<usize> = kernel_shapes.iter().map(|s| s[2]).collect();
        let arch = [Architecture::AsiConv7, Architecture::SmallConv3]
            .into_iter()
            .find(|a| a.kernel_sizes() == sizes.as_slice())
            .ok_or_else(|| {
                Error::format(8, format!("kernel sizes {sizes:?} match no known architecture"))
            })?;
        let channels = kernel_shapes[0][1];
        let n_kernels = kernel_shapes[0][0];

        let mut model =
            DynamicsModel::new(arch, n_kernels, (channels, spatial.0, spatial.1), 0)?;
        for (name, shape, data) in parsed {
            let Some(slot) = model.param_names.iter().position(|n| *n == name) else {
                return Err(Error::format(8, format!("unexpected parameter `{name}`")));
            };
            if model.params[slot].shape() != shape.as_slice() {
                return Err(Error::format(
                    8,
                    format!(
                        "parameter `{name}` has shape {shape:?}, expected {:?}",
                        model.params[slot].shape()
                    ),
                ));
            }
            model.params[slot] = Tensor::from_vec(shape, data)?.with_grad();
        }
        Ok(model)
    }
}

struct CheckpointReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> CheckpointReader<'a> {
    fn done(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn expect_magic(&mut self) -> Result<()> {
        let m = self.take(8, "magic")?;
        if m != CHECKPOINT_MAGIC {
            return Err(Error::format(
                0,
                format!(
                    "bad magic {:?}, expected \"{}\"",
                    String::from_utf8_lossy(m),
                    String::from_utf8_lossy(CHECKPOINT_MAGIC)
                ),
            ));
        }
        Ok(())
    }

    fn read_param(&mut self) -> Result<(String, Vec<usize>, Vec<f64>)> {
        let name_len = u16::from_le_bytes(self.take(2, "name length")?.try_into().unwrap());
        let name_bytes = self.take(name_len as usize, "name")?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| Error::format(self.pos as u64, "parameter name is not UTF-8"))?
            .to_string();
        let rank = self.take(1, "rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = u32::from_le_bytes(self.take(4, "dim")?.try_into().unwrap());
            shape.push(d as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = self.take(numel * 4, "values")?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok((name, shape, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asi_conv_7_layer_sizes() {
        let m = build_model("asi-conv-7", 48, (3, 16, 16), 1).unwrap();
        let sizes: Vec<usize> = m.layers.iter().map(|l| l.k).collect();
        assert_eq!(sizes, vec![5, 5, 5, 7, 5, 1, 1]);
        assert_eq!(m.layers[5].in_ch, 48 + 3, "input concat before the 6th layer");
        assert_eq!(m.layers[6].out_ch, 3);
    }

    #[test]
    fn param_count_matches_closed_form() {
        let (nk, c) = (48usize, 3usize);
        let m = build_model("asi-conv-7", nk, (c, 16, 16), 9).unwrap();
        // Independent arithmetic from the layer list.
        let expected = (c * nk * 25 + nk)
            + (nk * nk * 25 + nk)
            + (nk * nk * 25 + nk)
            + (nk * nk * 49 + nk)
            + (nk * nk * 25 + nk)
            + ((nk + c) * nk + nk)
            + (nk * c + c);
        assert_eq!(m.parameter_count(), expected);
    }

    #[test]
    fn same_seed_same_params() {
        let a = build_model("small-conv-3", 8, (1, 16, 16), 42).unwrap();
        let b = build_model("small-conv-3", 8, (1, 16, 16), 42).unwrap();
        for (pa, pb) in a.parameters().iter().zip(b.parameters()) {
            assert_eq!(pa.data(), pb.data());
        }
        let c = build_model("small-conv-3", 8, (1, 16, 16), 43).unwrap();
        assert_ne!(a.parameters()[0].data(), c.parameters()[0].data());
    }

    #[test]
    fn forward_shape_range_and_counter() {
        let m = build_model("small-conv-3", 8, (1, 16, 16), 7).unwrap();
        let frame = Tensor::zeros(vec![1, 16, 16]);
        assert_eq!(m.forward_count(), 0);
        let out = m.forward(&frame).unwrap();
        assert_eq!(m.forward_count(), 1);
        assert_eq!(out.shape(), &[1, 16, 16]);
        assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
        let out2 = m.forward(&frame).unwrap();
        assert_eq!(m.forward_count(), 2);
        assert_eq!(out.data(), out2.data(), "frozen model is deterministic");
    }

    #[test]
    fn forward_rejects_bad_shape() {
        let m = build_model("small-conv-3", 8, (1, 16, 16), 7).unwrap();
        let frame = Tensor::zeros(vec![1, 8, 8]);
        assert!(m.forward(&frame).is_err());
    }

    #[test]
    fn unknown_architecture_is_config_error() {
        assert!(matches!(
            build_model("conv-9000", 8, (1, 16, 16), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn taped_forward_matches_untaped() {
        let m = build_model("small-conv-3", 4, (1, 16, 16), 3).unwrap();
        let frame = Tensor::from_vec(
            vec![1, 16, 16],
            (0..256).map(|i| (i % 7) as f64 / 7.0).collect(),
        )
        .unwrap();
        let plain = m.forward(&frame).unwrap();
        let mut tape = Tape::new();
        let ids = m.register_params(&mut tape);
        let input = tape.constant(frame.data(), frame.shape());
        let out = m.forward_on_tape(&mut tape, input, &ids).unwrap();
        assert_eq!(plain.data(), tape.data(out));
        assert_eq!(m.forward_count(), 2);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let m = build_model("small-conv-3", 8, (1, 16, 16), 11).unwrap();
        m.save(&path).unwrap();
        let loaded = DynamicsModel::load(&path, (16, 16)).unwrap();
        assert_eq!(loaded.architecture(), Architecture::SmallConv3);
        assert_eq!(loaded.n_kernels(), 8);
        assert_eq!(loaded.input_shape(), (1, 16, 16));
        for (a, b) in m.parameters().iter().zip(loaded.parameters()) {
            // Values survive the f32 round trip.
            for (&x, &y) in a.data().iter().zip(b.data()) {
                assert_eq!(x as f32, y as f32);
            }
        }
    }

    #[test]
    fn checkpoint_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"NOTMAGIC").unwrap();
        let err = DynamicsModel::load(&path, (16, 16)).unwrap_err();
        assert!(err.to_string().contains("ASIMODEL"), "{err}");
    }
}
