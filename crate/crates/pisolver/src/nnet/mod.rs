//! The conditioner network and its serialization.
//!
//! The network maps a stack of per-node input channels — the physics-loss
//! gradient plus broadcast problem descriptors — to one output vector over
//! the same nodes. It is built from spectral-convolution blocks with dense
//! skip connections, so its weights are independent of the grid resolution:
//! the same parameters apply to any number of coefficients, with frequency
//! content beyond the retained modes simply ignored.
//!
//! Parameters live in one flat `f64` vector with a fixed layout (lift layer,
//! then each block's spectral/skip/bias triple, then the two projection
//! layers). The flat form is what optimizers update and what checkpoints
//! store; [`ConditionerNet::param_nodes`] mounts it onto a [`tape::Tape`] as
//! input nodes and [`ConditionerNet::gather_grad`] collects the matching
//! adjoints back into a flat gradient.

pub mod dft;
pub mod tape;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use tape::{Adjoints, NodeId, Tape, Value};

/// Number of input channels the network always consumes. Ablations zero
/// channels out rather than removing them, so every variant has the same
/// parameter budget.
pub const IN_CHANNELS: usize = 4;

/// Checkpoint file magic bytes.
const MAGIC: [u8; 4] = *b"PISV";
/// Checkpoint format version.
const VERSION: u32 = 1;

/// Architecture hyperparameters of the conditioner network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetArch {
    /// Channel width of the spectral blocks.
    pub width: usize,
    /// Retained low-frequency modes per spectral convolution.
    pub modes: usize,
    /// Number of spectral blocks.
    pub depth: usize,
    /// Hidden width of the pointwise projection head.
    pub fc_width: usize,
}

impl Default for NetArch {
    fn default() -> Self {
        NetArch {
            width: 32,
            modes: 16,
            depth: 3,
            fc_width: 32,
        }
    }
}

/// Which input channels carry information; the rest are zeroed.
///
/// The channel count never changes, so disabling an input compares
/// like-for-like against the full network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSpec {
    /// Feed the physics-loss gradient (the quantity being transformed).
    pub grad: bool,
    /// Feed the equation parameters, broadcast to every node.
    pub gamma: bool,
    /// Feed the boundary/initial scalars, broadcast to every node.
    pub bc: bool,
    /// Feed the forcing term projected onto the trial basis.
    pub forcing: bool,
}

impl Default for InputSpec {
    fn default() -> Self {
        InputSpec {
            grad: true,
            gamma: true,
            bc: true,
            forcing: true,
        }
    }
}

/// How a parameter segment is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SegKind {
    /// Uniform Glorot: `U(−s, s)` with `s = √(6/(fan_in + fan_out))`.
    DenseGlorot,
    /// Spectral weights: `U(−s, s)` with `s = 1/(in_ch·out_ch)`.
    Spectral,
    /// Zeros (biases, and the entire final projection layer so the network
    /// starts as an exact no-op).
    Zeros,
}

/// One contiguous run of the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct Segment {
    /// Rows of the mounted matrix; length, for a vector segment.
    rows: usize,
    /// Columns of the mounted matrix; 0 marks a vector segment.
    cols: usize,
    kind: SegKind,
}

impl Segment {
    fn len(&self) -> usize {
        self.rows * self.cols.max(1)
    }
}

/// Flat-layout description: segments in storage order.
fn segments(arch: &NetArch) -> Vec<Segment> {
    let NetArch {
        width,
        modes,
        depth,
        fc_width,
    } = *arch;
    let mut segs = vec![
        Segment {
            rows: width,
            cols: IN_CHANNELS,
            kind: SegKind::DenseGlorot,
        },
        Segment {
            rows: width,
            cols: 0,
            kind: SegKind::Zeros,
        },
    ];
    for _ in 0..depth {
        segs.push(Segment {
            rows: width,
            cols: width * modes * 2,
            kind: SegKind::Spectral,
        });
        segs.push(Segment {
            rows: width,
            cols: width,
            kind: SegKind::DenseGlorot,
        });
        segs.push(Segment {
            rows: width,
            cols: 0,
            kind: SegKind::Zeros,
        });
    }
    segs.push(Segment {
        rows: fc_width,
        cols: width,
        kind: SegKind::DenseGlorot,
    });
    segs.push(Segment {
        rows: fc_width,
        cols: 0,
        kind: SegKind::Zeros,
    });
    segs.push(Segment {
        rows: 1,
        cols: fc_width,
        kind: SegKind::Zeros,
    });
    segs.push(Segment {
        rows: 1,
        cols: 0,
        kind: SegKind::Zeros,
    });
    segs
}

impl NetArch {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.modes == 0 || self.depth == 0 || self.fc_width == 0 {
            return Err(Error::InvalidConfig {
                reason: "network width, modes, depth, and fc_width must all be positive".into(),
            });
        }
        Ok(())
    }

    /// Total number of trainable parameters.
    pub fn n_params(&self) -> usize {
        segments(self).iter().map(Segment::len).sum()
    }
}

/// Tape handles for every parameter segment, in layout order.
pub struct ParamNodes {
    lift_w: NodeId,
    lift_b: NodeId,
    /// Per block: spectral weights, skip weights, bias.
    blocks: Vec<(NodeId, NodeId, NodeId)>,
    p1_w: NodeId,
    p1_b: NodeId,
    p2_w: NodeId,
    p2_b: NodeId,
    /// Same handles again, flat and in storage order, for gradient gathering.
    ordered: Vec<NodeId>,
}

/// The learned conditioner: spectral blocks over input channels, applied to
/// any resolution.
#[derive(Debug, Clone)]
pub struct ConditionerNet {
    arch: NetArch,
    input_spec: InputSpec,
    seed: u64,
    params: Array1<f64>,
}

/// JSON header embedded in a checkpoint file.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    arch: NetArch,
    input_spec: InputSpec,
    seed: u64,
    n_params: usize,
}

impl ConditionerNet {
    /// Freshly initialized network. Weights are drawn from a counter-based
    /// generator in storage order, so a given `(arch, seed)` pair always
    /// produces the same parameters. The final projection layer starts at
    /// zero: an untrained network outputs exactly zero everywhere.
    pub fn init(arch: NetArch, input_spec: InputSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Array1::zeros(arch.n_params());
        let mut offset = 0;
        for seg in segments(&arch) {
            let len = seg.len();
            match seg.kind {
                SegKind::DenseGlorot => {
                    let fan_in = seg.cols as f64;
                    let fan_out = seg.rows as f64;
                    let s = (6.0 / (fan_in + fan_out)).sqrt();
                    for i in 0..len {
                        params[offset + i] = rng.gen_range(-s..s);
                    }
                }
                SegKind::Spectral => {
                    // in_ch == out_ch == width for every block.
                    let s = 1.0 / (seg.rows * seg.rows) as f64;
                    for i in 0..len {
                        params[offset + i] = rng.gen_range(-s..s);
                    }
                }
                SegKind::Zeros => {}
            }
            offset += len;
        }
        Ok(ConditionerNet {
            arch,
            input_spec,
            seed,
            params,
        })
    }

    pub fn arch(&self) -> &NetArch {
        &self.arch
    }

    pub fn input_spec(&self) -> &InputSpec {
        &self.input_spec
    }

    /// Seed the parameters were initialized from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &Array1<f64> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Array1<f64> {
        &mut self.params
    }

    /// Mount the flat parameter vector onto a tape as input nodes.
    pub fn param_nodes(&self, tape: &mut Tape) -> ParamNodes {
        let mut ordered = Vec::new();
        let mut offset = 0;
        let mut push = |tape: &mut Tape, seg: &Segment| -> NodeId {
            let len = seg.len();
            let slice = self.params.slice(ndarray::s![offset..offset + len]);
            offset += len;
            let id = if seg.cols == 0 {
                tape.input_vec(slice.to_owned())
            } else {
                let mat = Array2::from_shape_vec((seg.rows, seg.cols), slice.to_vec())
                    .expect("segment length matches its shape");
                tape.input_mat(mat)
            };
            ordered.push(id);
            id
        };
        let segs = segments(&self.arch);
        let mut it = segs.iter();
        let lift_w = push(tape, it.next().unwrap());
        let lift_b = push(tape, it.next().unwrap());
        let mut blocks = Vec::with_capacity(self.arch.depth);
        for _ in 0..self.arch.depth {
            let spec = push(tape, it.next().unwrap());
            let skip_w = push(tape, it.next().unwrap());
            let skip_b = push(tape, it.next().unwrap());
            blocks.push((spec, skip_w, skip_b));
        }
        let p1_w = push(tape, it.next().unwrap());
        let p1_b = push(tape, it.next().unwrap());
        let p2_w = push(tape, it.next().unwrap());
        let p2_b = push(tape, it.next().unwrap());
        assert!(it.next().is_none());
        ParamNodes {
            lift_w,
            lift_b,
            blocks,
            p1_w,
            p1_b,
            p2_w,
            p2_b,
            ordered,
        }
    }

    /// Build the network graph on `tape`: stack the channels, lift, run the
    /// spectral blocks, project down to one output row. Returns the output
    /// vector node (length = channel length).
    pub fn apply(&self, tape: &mut Tape, nodes: &ParamNodes, channels: &[NodeId]) -> NodeId {
        assert_eq!(
            channels.len(),
            IN_CHANNELS,
            "conditioner expects {IN_CHANNELS} input channels"
        );
        let stacked = tape.row_stack(channels.to_vec());
        let mut h = tape.dense(nodes.lift_w, Some(nodes.lift_b), stacked);
        for &(spec, skip_w, skip_b) in &nodes.blocks {
            let s = tape.spectral_conv(spec, h, self.arch.modes);
            let d = tape.dense(skip_w, Some(skip_b), h);
            let sum = tape.add(s, d);
            h = tape.gelu(sum);
        }
        let p = tape.dense(nodes.p1_w, Some(nodes.p1_b), h);
        let p = tape.gelu(p);
        let p = tape.dense(nodes.p2_w, Some(nodes.p2_b), p);
        tape.row_slice(p, 0)
    }

    /// Collect the adjoints of every parameter node into one flat gradient,
    /// in storage order. Parameters the loss never touched contribute zeros.
    pub fn gather_grad(&self, adjoints: &Adjoints, nodes: &ParamNodes) -> Array1<f64> {
        let mut grad = Array1::zeros(self.params.len());
        let mut offset = 0;
        for (seg, id) in segments(&self.arch).iter().zip(&nodes.ordered) {
            let len = seg.len();
            if let Some(value) = adjoints.get(*id) {
                match value {
                    Value::Vec1(v) => {
                        for i in 0..len {
                            grad[offset + i] = v[i];
                        }
                    }
                    Value::Mat(m) => {
                        let mut i = 0;
                        for r in 0..m.nrows() {
                            for c in 0..m.ncols() {
                                grad[offset + i] = m[[r, c]];
                                i += 1;
                            }
                        }
                    }
                    Value::Scalar(_) => unreachable!("parameter segments are never scalars"),
                }
            }
            offset += len;
        }
        grad
    }

    /// Write the network to a checkpoint file: magic, version, JSON header,
    /// then the raw little-endian parameter vector.
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = serde_json::to_vec(&CheckpointHeader {
            arch: self.arch,
            input_spec: self.input_spec,
            seed: self.seed,
            n_params: self.params.len(),
        })
        .expect("checkpoint header serializes");
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(&MAGIC).map_err(io)?;
        w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(header.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&header).map_err(io)?;
        for v in &self.params {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Read a checkpoint written by [`ConditionerNet::save`]. The parameter
    /// bytes round-trip exactly.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let parse = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: None,
            reason,
        };
        let io = |e| Error::io(path, e);

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if magic != MAGIC {
            return Err(parse("not a checkpoint file (bad magic)".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf).map_err(io)?;
        let version = u32::from_le_bytes(u32buf);
        if version != VERSION {
            return Err(parse(format!(
                "unsupported checkpoint version {version} (expected {VERSION})"
            )));
        }
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf).map_err(io)?;
        let header_len = u64::from_le_bytes(u64buf) as usize;
        if header_len > 1 << 20 {
            return Err(parse(format!("implausible header length {header_len}")));
        }
        let mut header_bytes = vec![0u8; header_len];
        r.read_exact(&mut header_bytes).map_err(io)?;
        let header: CheckpointHeader = serde_json::from_slice(&header_bytes)
            .map_err(|e| parse(format!("bad checkpoint header: {e}")))?;
        header.arch.validate()?;
        if header.n_params != header.arch.n_params() {
            return Err(parse(format!(
                "header claims {} parameters but the architecture has {}",
                header.n_params,
                header.arch.n_params()
            )));
        }
        let mut params = Array1::zeros(header.n_params);
        let mut f64buf = [0u8; 8];
        for i in 0..header.n_params {
            r.read_exact(&mut f64buf).map_err(io)?;
            params[i] = f64::from_le_bytes(f64buf);
        }
        let mut extra = [0u8; 1];
        match r.read(&mut extra).map_err(io)? {
            0 => {}
            _ => return Err(parse("trailing bytes after parameter data".into())),
        }
        Ok(ConditionerNet {
            arch: header.arch,
            input_spec: header.input_spec,
            seed: header.seed,
            params,
        })
    }
}
