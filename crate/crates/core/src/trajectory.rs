//! Experiment records, past/future partitions, block-Hankel views and the
//! persistent-excitation checks.
//!
//! Signals are stored column-per-time-step: a `q x (T+1)` matrix holds
//! `w(0), ..., w(T)`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::numerics::{rank_report, vstack, RankReport, RankTolerance};
use crate::{serde_mat, Error, Real, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: Option<u64>,
    pub source: String,
    /// `z` was synthesized from a known `F` rather than measured.
    #[serde(default)]
    pub oracle_target: bool,
}

/// Recorded `u, x, y, z` over `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset<T: Real> {
    pub u: DMatrix<T>,
    pub x: DMatrix<T>,
    pub y: Option<DMatrix<T>>,
    pub z: Option<DMatrix<T>>,
    pub meta: DatasetMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    U,
    X,
    Y,
    Z,
}

impl<T: Real> TrajectoryDataset<T> {
    pub fn new(
        u: DMatrix<T>,
        x: DMatrix<T>,
        y: Option<DMatrix<T>>,
        z: Option<DMatrix<T>>,
        meta: DatasetMeta,
    ) -> Result<Self> {
        let len = x.ncols();
        if len == 0 {
            return Err(Error::Schema("dataset has no samples".into()));
        }
        let check = |name: &str, m: &DMatrix<T>| {
            if m.ncols() != len {
                Err(Error::RaggedData(format!(
                    "{name} has {} samples, x has {len}",
                    m.ncols()
                )))
            } else {
                Ok(())
            }
        };
        check("u", &u)?;
        if let Some(y) = &y {
            check("y", y)?;
        }
        if let Some(z) = &z {
            check("z", z)?;
        }
        for m in [Some(&u), Some(&x), y.as_ref(), z.as_ref()].into_iter().flatten() {
            crate::numerics::ensure_finite(m)?;
        }
        Ok(Self { u, x, y, z, meta })
    }

    /// The horizon `T`; the record holds `T + 1` samples.
    pub fn horizon(&self) -> usize {
        self.x.ncols() - 1
    }

    pub fn m(&self) -> usize {
        self.u.nrows()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.as_ref().map_or(0, |y| y.nrows())
    }

    pub fn r(&self) -> usize {
        self.z.as_ref().map_or(0, |z| z.nrows())
    }

    /// Replaces `z` by `F x`. Flags the dataset as oracle mode.
    pub fn with_target_map(&self, f: &DMatrix<T>) -> Result<Self> {
        if f.ncols() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "F has {} columns, state dimension is {}",
                f.ncols(),
                self.n()
            )));
        }
        let mut out = self.clone();
        out.z = Some(f * &self.x);
        out.meta.oracle_target = true;
        Ok(out)
    }

    pub fn channel(&self, ch: Channel) -> Result<&DMatrix<T>> {
        match ch {
            Channel::U => Ok(&self.u),
            Channel::X => Ok(&self.x),
            Channel::Y => self.y.as_ref().ok_or(Error::MissingChannel("y")),
            Channel::Z => self.z.as_ref().ok_or(Error::MissingChannel("z")),
        }
    }

    pub fn load<R: Read>(reader: R, format: Format) -> Result<Self> {
        match format {
            Format::Csv => read_csv(reader),
            Format::Json => read_json(reader),
        }
    }

    pub fn load_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(file), Format::from_path(path))
    }

    pub fn save<W: Write>(&self, writer: W, format: Format) -> Result<()> {
        match format {
            Format::Csv => self.write_csv(writer),
            Format::Json => {
                serde_json::to_writer_pretty(writer, &DatasetJson::from(self))?;
                Ok(())
            }
        }
    }

    pub fn save_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.save(&mut w, Format::from_path(path))?;
        w.flush()?;
        Ok(())
    }

    fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let blocks: Vec<(&str, &DMatrix<T>)> = [
            ("u", Some(&self.u)),
            ("x", Some(&self.x)),
            ("y", self.y.as_ref()),
            ("z", self.z.as_ref()),
        ]
        .into_iter()
        .filter_map(|(n, m)| m.map(|m| (n, m)))
        .collect();
        let mut header = vec!["t".to_string()];
        for (name, m) in &blocks {
            header.extend((1..=m.nrows()).map(|i| format!("{name}{i}")));
        }
        w.write_record(&header)?;
        for t in 0..=self.horizon() {
            let mut rec = vec![t.to_string()];
            for (_, m) in &blocks {
                rec.extend(m.column(t).iter().map(|v| fmt17(v.as_f64())));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// 17 significant digits; round-trips every `f64`.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn read_csv<T: Real, R: Read>(reader: R) -> Result<TrajectoryDataset<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::Schema("empty input".into()));
    }
    if header[0] != "t" {
        return Err(Error::Schema(format!("first column must be `t`, found `{}`", header[0])));
    }
    // channel layout: contiguous 1-based columns in the order u, x, y, z
    let mut counts = [0usize; 4];
    let mut last = 0usize;
    for h in &header[1..] {
        let (prefix, idx) = h.split_at(1.min(h.len()));
        let slot = match prefix {
            "u" => 0,
            "x" => 1,
            "y" => 2,
            "z" => 3,
            _ => return Err(Error::Schema(format!("unknown column `{h}`"))),
        };
        let idx: usize = idx
            .parse()
            .map_err(|_| Error::Schema(format!("bad column name `{h}`")))?;
        if slot < last || idx != counts[slot] + 1 {
            return Err(Error::Schema(format!("column `{h}` out of order")));
        }
        last = slot;
        counts[slot] += 1;
    }
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::Schema("u and x channels are required".into()));
    }
    let mut cols: Vec<Vec<T>> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::RaggedData(format!(
                "row {row} has {} fields, header has {}",
                rec.len(),
                header.len()
            )));
        }
        let t: usize = rec[0]
            .parse()
            .map_err(|_| Error::Schema(format!("row {row}: bad time index `{}`", &rec[0])))?;
        if t != row {
            return Err(Error::Schema(format!("row {row}: time index {t} out of sequence")));
        }
        let mut vals = Vec::with_capacity(header.len() - 1);
        for field in rec.iter().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Schema(format!("row {row}: bad number `{field}`")))?;
            vals.push(T::lit(v));
        }
        cols.push(vals);
    }
    if cols.is_empty() {
        return Err(Error::Schema("no data rows".into()));
    }
    let len = cols.len();
    let mut offset = 0;
    let mut take = |k: usize| -> Option<DMatrix<T>> {
        if k == 0 {
            return None;
        }
        let m = DMatrix::from_fn(k, len, |i, t| cols[t][offset + i]);
        offset += k;
        Some(m)
    };
    let u = take(counts[0]).expect("u present");
    let x = take(counts[1]).expect("x present");
    let y = take(counts[2]);
    let z = take(counts[3]);
    TrajectoryDataset::new(u, x, y, z, DatasetMeta { source: "csv".into(), ..Default::default() })
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonMeta {
    m: usize,
    n: usize,
    #[serde(default)]
    p: usize,
    #[serde(default)]
    r: usize,
    #[serde(rename = "T")]
    horizon: usize,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    source: String,
    #[serde(default)]
    oracle_target: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct DatasetJson<T> {
    meta: JsonMeta,
    u: Vec<Vec<T>>,
    x: Vec<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<Vec<Vec<T>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    z: Option<Vec<Vec<T>>>,
}

impl<T: Real> From<&TrajectoryDataset<T>> for DatasetJson<T> {
    fn from(ds: &TrajectoryDataset<T>) -> Self {
        let time_major = |m: &DMatrix<T>| serde_mat::to_rows(&m.transpose());
        DatasetJson {
            meta: JsonMeta {
                m: ds.m(),
                n: ds.n(),
                p: ds.p(),
                r: ds.r(),
                horizon: ds.horizon(),
                seed: ds.meta.seed,
                source: ds.meta.source.clone(),
                oracle_target: ds.meta.oracle_target,
            },
            u: time_major(&ds.u),
            x: time_major(&ds.x),
            y: ds.y.as_ref().map(time_major),
            z: ds.z.as_ref().map(time_major),
        }
    }
}

fn read_json<T: Real, R: Read>(mut reader: R) -> Result<TrajectoryDataset<T>> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    if text.trim().is_empty() {
        return Err(Error::Schema("empty input".into()));
    }
    let raw: DatasetJson<T> =
        serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))?;
    let len = raw.meta.horizon + 1;
    let block = |name: &str, rows: &[Vec<T>], dim: usize| -> Result<DMatrix<T>> {
        if rows.len() != len {
            return Err(Error::RaggedData(format!(
                "{name} has {} samples, expected {len}",
                rows.len()
            )));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::Schema(format!(
                "{name}[{bad}] has dimension {}, expected {dim}",
                rows[bad].len()
            )));
        }
        Ok(DMatrix::from_fn(dim, len, |i, t| rows[t][i]))
    };
    let u = block("u", &raw.u, raw.meta.m)?;
    let x = block("x", &raw.x, raw.meta.n)?;
    let y = raw.y.as_deref().map(|y| block("y", y, raw.meta.p)).transpose()?;
    let z = raw.z.as_deref().map(|z| block("z", z, raw.meta.r)).transpose()?;
    TrajectoryDataset::new(
        u,
        x,
        y,
        z,
        DatasetMeta {
            seed: raw.meta.seed,
            source: raw.meta.source,
            oracle_target: raw.meta.oracle_target,
        },
    )
}

/// Past (`t = 0..T-1`) and future (`t = 1..T`) blocks of every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPartition<T: Real> {
    pub up: DMatrix<T>,
    pub uf: DMatrix<T>,
    pub xp: DMatrix<T>,
    pub xf: DMatrix<T>,
    pub yp: Option<DMatrix<T>>,
    pub yf: Option<DMatrix<T>>,
    pub zp: DMatrix<T>,
    pub zf: DMatrix<T>,
}

fn past<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    m.columns(0, m.ncols() - 1).into_owned()
}

fn future<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    m.columns(1, m.ncols() - 1).into_owned()
}

pub fn partition<T: Real>(ds: &TrajectoryDataset<T>) -> Result<DataPartition<T>> {
    let z = ds.z.as_ref().ok_or(Error::MissingChannel("z"))?;
    if ds.horizon() < 1 {
        return Err(Error::OutOfRange("partition needs a horizon of at least 1".into()));
    }
    Ok(DataPartition {
        up: past(&ds.u),
        uf: future(&ds.u),
        xp: past(&ds.x),
        xf: future(&ds.x),
        yp: ds.y.as_ref().map(past),
        yf: ds.y.as_ref().map(future),
        zp: past(z),
        zf: future(z),
    })
}

impl<T: Real> DataPartition<T> {
    pub fn m(&self) -> usize {
        self.up.nrows()
    }

    pub fn n(&self) -> usize {
        self.xp.nrows()
    }

    pub fn r(&self) -> usize {
        self.zp.nrows()
    }

    /// Number of columns `T` of each block.
    pub fn columns(&self) -> usize {
        self.up.ncols()
    }

    /// Same experiment with the target blocks replaced, e.g. by `[Z; R X]`.
    pub fn with_target(&self, zp: DMatrix<T>, zf: DMatrix<T>) -> Result<Self> {
        if zp.ncols() != self.columns() || zf.ncols() != self.columns() || zp.nrows() != zf.nrows() {
            return Err(Error::DimensionMismatch("replacement target blocks".into()));
        }
        Ok(Self {
            zp,
            zf,
            ..self.clone()
        })
    }

    /// `[Zp; R Xp]` and `[Zf; R Xf]`.
    pub fn augmented(&self, r: &DMatrix<T>) -> Result<Self> {
        if r.ncols() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "R has {} columns, state dimension is {}",
                r.ncols(),
                self.n()
            )));
        }
        let zp = vstack(&[&self.zp, &(r * &self.xp)])?;
        let zf = vstack(&[&self.zf, &(r * &self.xf)])?;
        self.with_target(zp, zf)
    }

    /// `Zp Xp^-`, the target map recovered from data.
    pub fn target_map(&self) -> Result<DMatrix<T>> {
        Ok(&self.zp * crate::numerics::pinv(&self.xp)?)
    }
}

/// `W_{i,t,N}`: block row `k`, column `j` holds `w(i + k + j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelBlock<T: Real> {
    pub start: usize,
    pub block_rows: usize,
    pub cols: usize,
    pub data: DMatrix<T>,
}

pub fn hankel_matrix<T: Real>(
    signal: &DMatrix<T>,
    start: usize,
    block_rows: usize,
    cols: usize,
) -> Result<DMatrix<T>> {
    let horizon = signal.ncols().saturating_sub(1);
    if block_rows == 0 || cols == 0 || start + block_rows + cols - 2 > horizon {
        return Err(Error::OutOfRange(format!(
            "Hankel W_{{{start},{block_rows},{cols}}} needs samples up to {} but T = {horizon}",
            (start + block_rows + cols).saturating_sub(2)
        )));
    }
    let q = signal.nrows();
    let mut out = DMatrix::zeros(q * block_rows, cols);
    for k in 0..block_rows {
        out.rows_mut(k * q, q)
            .copy_from(&signal.columns(start + k, cols));
    }
    Ok(out)
}

pub fn hankel<T: Real>(
    ds: &TrajectoryDataset<T>,
    channel: Channel,
    start: usize,
    block_rows: usize,
    cols: usize,
) -> Result<HankelBlock<T>> {
    Ok(HankelBlock {
        start,
        block_rows,
        cols,
        data: hankel_matrix(ds.channel(channel)?, start, block_rows, cols)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationReport {
    pub holds: bool,
    pub expected_rank: usize,
    pub rank: RankReport,
}

/// `[Up; Xp]` has full row rank `m + n`.
pub fn check_assumption1<T: Real>(
    dp: &DataPartition<T>,
    tol: &RankTolerance<T>,
) -> Result<ExcitationReport> {
    let stacked = vstack(&[&dp.up, &dp.xp])?;
    let rank = rank_report(&stacked, tol)?;
    let expected_rank = dp.m() + dp.n();
    Ok(ExcitationReport {
        holds: rank.rank == expected_rank,
        expected_rank,
        rank,
    })
}

/// `[U_{0,t,T-t+1}; X_{0,T-t+1}]` has full row rank `m t + n`.
pub fn check_assumption2<T: Real>(
    ds: &TrajectoryDataset<T>,
    t: usize,
    tol: &RankTolerance<T>,
) -> Result<ExcitationReport> {
    let horizon = ds.horizon();
    if t == 0 || t > horizon {
        return Err(Error::OutOfRange(format!("t = {t} with horizon {horizon}")));
    }
    let cols = horizon - t + 1;
    let uh = hankel_matrix(&ds.u, 0, t, cols)?;
    let xrow = hankel_matrix(&ds.x, 0, 1, cols)?;
    let stacked = vstack(&[&uh, &xrow])?;
    let rank = rank_report(&stacked, tol)?;
    let expected_rank = ds.m() * t + ds.n();
    Ok(ExcitationReport {
        holds: rank.rank == expected_rank,
        expected_rank,
        rank,
    })
}

/// Shortest horizon for which the block-Hankel check at depth `t` can pass.
pub fn min_horizon(m: usize, n: usize, t: usize) -> usize {
    (m + 1) * t + n - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn tiny() -> TrajectoryDataset<f64> {
        TrajectoryDataset::new(
            dmatrix![0.0, 1.0, 2.0, 3.0],
            dmatrix![1.0, 0.5, -0.25, 2.0; 0.0, 1.0, 1.5, -1.0],
            None,
            Some(dmatrix![1.0, 1.5, 1.25, 1.0]),
            DatasetMeta::default(),
        )
        .unwrap()
    }

    #[test]
    fn scalar_hankel() {
        let h = hankel(&tiny(), Channel::U, 0, 2, 3).unwrap();
        assert_eq!(h.data, dmatrix![0.0, 1.0, 2.0; 1.0, 2.0, 3.0]);
        let row = hankel(&tiny(), Channel::U, 1, 1, 3).unwrap();
        assert_eq!(row.data, dmatrix![1.0, 2.0, 3.0]);
        assert!(matches!(
            hankel(&tiny(), Channel::U, 1, 2, 3),
            Err(Error::OutOfRange(_))
        ));
        assert!(matches!(
            hankel(&tiny(), Channel::Y, 0, 1, 1),
            Err(Error::MissingChannel("y"))
        ));
    }

    #[test]
    fn partition_blocks() {
        let dp = partition(&tiny()).unwrap();
        assert_eq!(dp.up, dmatrix![0.0, 1.0, 2.0]);
        assert_eq!(dp.uf, dmatrix![1.0, 2.0, 3.0]);
        assert_eq!(dp.zf.ncols(), 3);
    }

    #[test]
    fn single_step_partition() {
        let ds = TrajectoryDataset::new(
            dmatrix![0.3, 0.7],
            dmatrix![1.0, 2.0],
            None,
            Some(dmatrix![1.0, 2.0]),
            DatasetMeta::default(),
        )
        .unwrap();
        let dp = partition(&ds).unwrap();
        assert_eq!(dp.uf, dmatrix![0.7]);
        assert_eq!(dp.columns(), 1);
    }

    #[test]
    fn missing_target_is_reported() {
        let mut ds = tiny();
        ds.z = None;
        assert!(matches!(partition(&ds), Err(Error::MissingChannel("z"))));
    }

    #[test]
    fn ragged_rejected() {
        let r = TrajectoryDataset::new(
            dmatrix![0.0, 1.0],
            dmatrix![1.0, 2.0, 3.0],
            None,
            None,
            DatasetMeta::default(),
        );
        assert!(matches!(r, Err(Error::RaggedData(_))));
    }

    #[test]
    fn csv_round_trip_and_schema_errors() {
        let ds = tiny();
        let mut buf = Vec::new();
        ds.save(&mut buf, Format::Csv).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,u1,x1,x2,z1\n"));
        let back = TrajectoryDataset::<f64>::load(&buf[..], Format::Csv).unwrap();
        assert_eq!(back.x, ds.x);
        assert_eq!(back.z, ds.z);

        assert!(matches!(
            TrajectoryDataset::<f64>::load(&b""[..], Format::Csv),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            TrajectoryDataset::<f64>::load(&b""[..], Format::Json),
            Err(Error::Schema(_))
        ));
        let bad = b"t,x1,u1\n0,1,2\n";
        assert!(matches!(
            TrajectoryDataset::<f64>::load(&bad[..], Format::Csv),
            Err(Error::Schema(_))
        ));
        let ragged = b"t,u1,x1\n0,1,2\n1,2\n";
        assert!(matches!(
            TrajectoryDataset::<f64>::load(&ragged[..], Format::Csv),
            Err(Error::RaggedData(_))
        ));
    }

    #[test]
    fn assumption_checks_collapse_at_depth_one() {
        let ds = tiny();
        let dp = partition(&ds).unwrap();
        let tol = RankTolerance::default();
        let a1 = check_assumption1(&dp, &tol).unwrap();
        let a2 = check_assumption2(&ds, 1, &tol).unwrap();
        assert_eq!(a1.holds, a2.holds);
        assert_eq!(a1.rank.rank, a2.rank.rank);
        assert_eq!(a1.expected_rank, 3);
    }

    #[test]
    fn short_record_fails_assumption1() {
        // two columns cannot carry rank m + n = 3
        let ds = TrajectoryDataset::new(
            dmatrix![0.1, 0.9, 0.4],
            dmatrix![1.0, 0.2, 0.3; 0.0, 1.0, 0.7],
            None,
            Some(dmatrix![1.0, 0.2, 0.3]),
            DatasetMeta::default(),
        )
        .unwrap();
        let dp = partition(&ds).unwrap();
        assert!(!check_assumption1(&dp, &RankTolerance::default()).unwrap().holds);
    }
}
