//! Instance sampling, reference solutions, and dataset serialization.
//!
//! A dataset is a family name plus a list of sampled instances, each carrying
//! its parameters, boundary data, and a reference solution on the coarse
//! collocation grid. Sampling is **stream-addressed**: record `i` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` with stream `i` (test records use
//! streams offset by `2³²`), so any record can be regenerated independently
//! and the whole file is byte-identical across runs and machines.
//!
//! Reference solutions:
//!
//! * `helmholtz1d` — closed form, evaluated on a 4× finer grid and
//!   subsampled (the fine nodes contain the coarse ones exactly).
//! * `poisson1d` — a second-order finite-difference march directly on the
//!   coarse grid: both boundary data live at `x = 0`, making the problem an
//!   initial-value march `u_{j+1} = 2u_j − u_{j−1} − h²f_j` started with a
//!   Taylor step.
//! * `nlrd1dt` — Strang splitting on the 4× finer space–time grid: a half
//!   step of the exact logistic reaction flow, a full Crank–Nicolson
//!   diffusion step with periodic boundaries (cyclic Thomas solve), and
//!   another half reaction step; then subsampled 4× in both axes.
//!
//! The on-disk format is newline-delimited JSON: line 1 is the header, each
//! further line one record with the solution field packed as base64-encoded
//! little-endian `f64`s (train block first, then test block).

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{
    nlrd_initial_profile, BoundaryData, Family, Grid, PdeInstance, PdeParams,
};

/// Coarse spatial points for the 1d families.
pub const COARSE_1D: usize = 64;
/// Coarse spatial × temporal points for the space–time family.
pub const COARSE_2D: (usize, usize) = (64, 25);
/// Refinement factor between the reference solver's grid and the coarse grid.
pub const REFINE: usize = 4;
/// Stream offset separating test draws from train draws.
pub const TEST_STREAM_OFFSET: u64 = 1 << 32;

/// Grid dimensions as stored in the dataset header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub m_x: usize,
    pub m_t: Option<usize>,
}

impl GridShape {
    pub fn len(&self) -> usize {
        self.m_x * self.m_t.unwrap_or(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn grid(&self) -> Grid {
        match self.m_t {
            None => Grid::line(self.m_x),
            Some(m_t) => Grid::space_time(self.m_x, m_t),
        }
    }

    fn refined(&self) -> GridShape {
        GridShape {
            m_x: self.m_x * REFINE,
            m_t: self.m_t.map(|m| m * REFINE),
        }
    }
}

/// First line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub schema_version: u32,
    pub family: Family,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub coarse: GridShape,
    pub fine: GridShape,
}

/// One sampled instance with its reference solution on the coarse grid
/// (time-major flattening for space–time grids).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    /// RNG stream this record was drawn from.
    pub index: u64,
    pub params: PdeParams,
    pub bc: BoundaryData,
    /// Reference solution, base64-encoded little-endian f64.
    #[serde(with = "base64_f64")]
    pub u: Vec<f64>,
}

/// Base64 <-> `Vec<f64>` codec for the solution payload.
mod base64_f64 {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], ser: S) -> std::result::Result<S::Ok, S::Error> {
        let mut bytes = Vec::with_capacity(v.len() * 8);
        for x in v {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        ser.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> std::result::Result<Vec<f64>, D::Error> {
        let s = String::deserialize(de)?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(s.as_bytes())
            .map_err(serde::de::Error::custom)?;
        if bytes.len() % 8 != 0 {
            return Err(serde::de::Error::custom(format!(
                "solution payload length {} is not a multiple of 8",
                bytes.len()
            )));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }
}

/// A generated dataset: header plus train/test records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub train: Vec<Record>,
    pub test: Vec<Record>,
}

impl Dataset {
    /// Rebuild the in-memory instance for a record.
    pub fn instance(&self, rec: &Record) -> PdeInstance {
        PdeInstance {
            family: self.header.family,
            params: rec.params.clone(),
            bc: rec.bc.clone(),
            grid: self.header.coarse.grid(),
        }
    }

    /// Train records as `(instance, reference)` pairs.
    pub fn train_pairs(&self) -> Vec<(PdeInstance, Array1<f64>)> {
        self.pairs(&self.train)
    }

    /// Test records as `(instance, reference)` pairs.
    pub fn test_pairs(&self) -> Vec<(PdeInstance, Array1<f64>)> {
        self.pairs(&self.test)
    }

    fn pairs(&self, recs: &[Record]) -> Vec<(PdeInstance, Array1<f64>)> {
        recs.iter()
            .map(|r| (self.instance(r), Array1::from(r.u.clone())))
            .collect()
    }
}

/// Coarse grid shape for a family.
pub fn default_shape(family: Family) -> GridShape {
    match family {
        Family::Helmholtz1d | Family::Poisson1d => GridShape {
            m_x: COARSE_1D,
            m_t: None,
        },
        Family::Nlrd1dt => GridShape {
            m_x: COARSE_2D.0,
            m_t: Some(COARSE_2D.1),
        },
    }
}

/// Draw one instance on the coarse grid for `shape`.
///
/// Draw order is part of the format: equation parameters first, then the
/// boundary draw. Per family:
///
/// * `helmholtz1d`: `ω ~ U[0.5, 50)`, then `u0, v0 ~ N(0, 1)`.
/// * `poisson1d`: `a_1..a_16 ~ U[−100, 100)`, then `u0, v0 ~ N(0, 1)`.
/// * `nlrd1dt`: `ν ~ U[1, 5)`, `ρ ~ U[−5, 5)`; the initial profile is the
///   fixed Gaussian bump (no draw).
pub fn sample_instance(family: Family, seed: u64, stream: u64, shape: GridShape) -> PdeInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let grid = shape.grid();
    let (params, bc) = match family {
        Family::Helmholtz1d => {
            let omega = rng.gen_range(0.5..50.0);
            let value: f64 = rng.sample(StandardNormal);
            let slope: f64 = rng.sample(StandardNormal);
            (
                PdeParams::Helmholtz { omega },
                BoundaryData::PointValueSlope { value, slope },
            )
        }
        Family::Poisson1d => {
            let coeffs: Vec<f64> = (0..crate::pde::POISSON_MODES)
                .map(|_| rng.gen_range(-100.0..100.0))
                .collect();
            let value: f64 = rng.sample(StandardNormal);
            let slope: f64 = rng.sample(StandardNormal);
            (
                PdeParams::Poisson { coeffs },
                BoundaryData::PointValueSlope { value, slope },
            )
        }
        Family::Nlrd1dt => {
            let nu = rng.gen_range(1.0..5.0);
            let rho = rng.gen_range(-5.0..5.0);
            (
                PdeParams::Nlrd { nu, rho },
                BoundaryData::InitialProfile {
                    values: nlrd_initial_profile(&grid.xs),
                },
            )
        }
    };
    PdeInstance {
        family,
        params,
        bc,
        grid,
    }
}

/// Reference solution for an instance on its own (coarse) grid.
pub fn solve_reference(inst: &PdeInstance) -> Result<Vec<f64>> {
    match inst.family {
        Family::Helmholtz1d => {
            let m = inst.grid.xs.len();
            let fine_m = m * REFINE;
            let fine_xs: Vec<f64> = (0..fine_m).map(|j| j as f64 / fine_m as f64).collect();
            let fine = inst
                .analytic_solution(&fine_xs)
                .expect("helmholtz has a closed form");
            Ok((0..m).map(|j| fine[j * REFINE]).collect())
        }
        Family::Poisson1d => {
            let xs = &inst.grid.xs;
            let m = xs.len();
            if m < 2 {
                return Err(Error::DegenerateGeometry {
                    reason: format!("finite-difference march needs ≥ 2 points, got {m}"),
                });
            }
            let (u0, v0) = inst.point_bc().ok_or_else(|| Error::InvalidConfig {
                reason: "poisson reference needs point boundary data".to_string(),
            })?;
            let coeffs = match &inst.params {
                PdeParams::Poisson { coeffs } => coeffs,
                _ => {
                    return Err(Error::InvalidConfig {
                        reason: "poisson reference given non-poisson parameters".to_string(),
                    })
                }
            };
            let h = xs[1] - xs[0];
            let f: Vec<f64> = xs
                .iter()
                .map(|&x| crate::pde::poisson_forcing(coeffs, x))
                .collect();
            let mut u = vec![0.0; m];
            u[0] = u0;
            // Taylor start: u(h) = u0 + h·u' + h²/2·u'' with u'' = −f.
            u[1] = u0 + h * v0 + 0.5 * h * h * (-f[0]);
            for j in 1..m - 1 {
                u[j + 1] = 2.0 * u[j] - u[j - 1] + h * h * (-f[j]);
            }
            Ok(u)
        }
        Family::Nlrd1dt => solve_nlrd_reference(inst),
    }
}

/// Strang-split reference for the reaction–diffusion family; see the module
/// docs for the scheme. Works on a `REFINE`× finer grid in both axes and
/// subsamples back.
fn solve_nlrd_reference(inst: &PdeInstance) -> Result<Vec<f64>> {
    let (nu, rho) = match &inst.params {
        PdeParams::Nlrd { nu, rho } => (*nu, *rho),
        _ => {
            return Err(Error::InvalidConfig {
                reason: "reaction–diffusion reference given wrong parameters".to_string(),
            })
        }
    };
    let m_x = inst.grid.xs.len();
    let m_t = inst
        .grid
        .ts
        .as_ref()
        .map(|t| t.len())
        .ok_or_else(|| Error::InvalidConfig {
            reason: "reaction–diffusion reference needs a time axis".to_string(),
        })?;
    let fx = m_x * REFINE;
    let ft = m_t * REFINE;
    let h = 1.0 / fx as f64;
    let dt = 1.0 / ft as f64;

    let fine_xs: Vec<f64> = (0..fx).map(|j| j as f64 / fx as f64).collect();
    let mut u = nlrd_initial_profile(&fine_xs);
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(ft);
    levels.push(u.clone());

    // Crank–Nicolson diffusion coefficients (periodic Laplacian).
    let alpha = nu * dt / (2.0 * h * h);
    let lower = vec![-alpha; fx - 1];
    let upper = vec![-alpha; fx - 1];
    let diag = vec![1.0 + 2.0 * alpha; fx];

    // Exact flow of u' = ρ u (1 − u) over a half step.
    let react = |u: &mut [f64], s: f64| {
        let e = (rho * s).exp();
        for v in u.iter_mut() {
            let num = *v * e;
            *v = num / (1.0 - *v + num);
        }
    };

    let mut rhs = vec![0.0; fx];
    for _ in 1..ft {
        react(&mut u, dt / 2.0);
        for i in 0..fx {
            let im = if i == 0 { fx - 1 } else { i - 1 };
            let ip = if i == fx - 1 { 0 } else { i + 1 };
            rhs[i] = (1.0 - 2.0 * alpha) * u[i] + alpha * (u[im] + u[ip]);
        }
        u = crate::linalg::solve_cyclic_tridiagonal(&lower, &diag, &upper, -alpha, -alpha, &rhs)?;
        react(&mut u, dt / 2.0);
        levels.push(u.clone());
    }

    // Subsample time levels and spatial columns back to the coarse grid,
    // time-major.
    let mut out = Vec::with_capacity(m_x * m_t);
    for it in 0..m_t {
        let level = &levels[it * REFINE];
        for ix in 0..m_x {
            out.push(level[ix * REFINE]);
        }
    }
    Ok(out)
}

/// Sample and solve a complete dataset. Record `i` of the train split uses
/// RNG stream `i`; record `i` of the test split uses stream `2³² + i`.
pub fn generate(family: Family, seed: u64, n_train: usize, n_test: usize) -> Result<Dataset> {
    let coarse = default_shape(family);
    let header = DatasetHeader {
        schema_version: 1,
        family,
        seed,
        n_train,
        n_test,
        coarse,
        fine: coarse.refined(),
    };
    let make = |stream: u64| -> Result<Record> {
        let inst = sample_instance(family, seed, stream, coarse);
        let u = solve_reference(&inst)?;
        Ok(Record {
            index: stream,
            params: inst.params,
            bc: inst.bc,
            u,
        })
    };
    let mut train = Vec::with_capacity(n_train);
    for i in 0..n_train {
        train.push(make(i as u64)?);
    }
    let mut test = Vec::with_capacity(n_test);
    for i in 0..n_test {
        test.push(make(TEST_STREAM_OFFSET + i as u64)?);
    }
    Ok(Dataset {
        header,
        train,
        test,
    })
}

/// Write a dataset as newline-delimited JSON.
pub fn write_ndjson(ds: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let emit = |w: &mut BufWriter<std::fs::File>, line: String| -> Result<()> {
        w.write_all(line.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))
    };
    emit(
        &mut w,
        serde_json::to_string(&ds.header).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: Some(1),
            reason: e.to_string(),
        })?,
    )?;
    for rec in ds.train.iter().chain(ds.test.iter()) {
        emit(
            &mut w,
            serde_json::to_string(rec).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: None,
                reason: e.to_string(),
            })?,
        )?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a dataset written by [`write_ndjson`], validating the schema version,
/// record count, and solution lengths.
pub fn read_ndjson(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line: Some(line + 1),
        reason,
    };

    let (_, first) = lines.next().ok_or_else(|| parse_err(0, "empty file".into()))?;
    let first = first.map_err(|e| Error::io(path, e))?;
    let header: DatasetHeader =
        serde_json::from_str(&first).map_err(|e| parse_err(0, e.to_string()))?;
    if header.schema_version != 1 {
        return Err(parse_err(
            0,
            format!("unsupported schema version {}", header.schema_version),
        ));
    }

    let expect = header.n_train + header.n_test;
    let grid_len = header.coarse.len();
    let mut records = Vec::with_capacity(expect);
    for (lineno, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        if rec.u.len() != grid_len {
            return Err(parse_err(
                lineno,
                format!("solution has {} values, grid has {grid_len}", rec.u.len()),
            ));
        }
        records.push(rec);
    }
    if records.len() != expect {
        return Err(parse_err(
            0,
            format!("header promises {expect} records, file has {}", records.len()),
        ));
    }
    let test = records.split_off(header.n_train);
    Ok(Dataset {
        header,
        train: records,
        test,
    })
}
