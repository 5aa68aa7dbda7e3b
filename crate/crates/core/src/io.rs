//! CSV exchange formats.
//!
//! Signals are `t,value`. Kernels and weights are index lists plus a value,
//! written over the lower triangle (`i >= j >= k`). Response tables are
//! `amplitude,i,l1[,l2],value` on the identification lattice. Floats use the
//! shortest representation that round-trips.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Kernel1, Kernel2, Kernel3, Placement, SampledSignal, SymMatrix, SymTensor3, TimeGrid};
use crate::identification::{Lattice, Lattice2, Lattice3, ResponseTable};
use crate::simulation::{CrossKernel, KernelSet, PiWeights, VectorQuadraticModel};

/// A named in-memory file, written out by the caller once everything succeeded.
pub type NamedFile = (String, Vec<u8>);

fn num(v: f64) -> String {
    format!("{v}")
}

/// Writes a header and numeric rows.
pub fn write_rows<W: Write>(w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for r in rows {
        out.write_record(&r)?;
    }
    out.flush()?;
    Ok(())
}

/// Equal-length columns under a header.
pub fn write_columns<W: Write>(w: W, header: &[&str], cols: &[&[f64]]) -> Result<()> {
    let len = cols.first().map_or(0, |c| c.len());
    if cols.iter().any(|c| c.len() != len) || cols.len() != header.len() {
        return Err(Error::Parameter("columns and header differ in length".into()));
    }
    write_rows(w, header, (0..len).map(|r| cols.iter().map(|c| num(c[r])).collect()))
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Reads every record as numbers, checking the column count.
pub fn read_numeric<R: Read>(r: R, columns: usize) -> Result<Vec<Vec<f64>>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let mut rows = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != columns {
            return Err(Error::Parse(format!("row {}: expected {columns} columns, got {}", k + 1, rec.len())));
        }
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| Error::Parse(format!("row {}: not a number: {f:?}", k + 1))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn index(v: f64, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(Error::Parse(format!("{what} must be a non-negative integer, got {v}")))
    }
}

pub fn write_signal<W: Write>(w: W, s: &SampledSignal) -> Result<()> {
    write_columns(w, &["t", "value"], &[&s.times(), s.values()])
}

pub fn signal_bytes(s: &SampledSignal) -> Result<Vec<u8>> {
    to_bytes(|b| write_signal(b, s))
}

/// Reads `t,value`; grid and placement are inferred from the times
/// (first time 0: nodes; first time h/2: midpoints).
pub fn read_signal<R: Read>(r: R) -> Result<SampledSignal> {
    let rows = read_numeric(r, 2)?;
    if rows.is_empty() {
        return Err(Error::Parse("signal file has no samples".into()));
    }
    let t: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let v: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let h = if t.len() >= 2 { t[1] - t[0] } else { 2.0 * t[0] };
    if !(h > 0.0) {
        return Err(Error::Parse("signal times must increase".into()));
    }
    let placement = if t[0].abs() <= 1e-9 * h {
        Placement::Nodes
    } else if (t[0] - 0.5 * h).abs() <= 1e-9 * h {
        Placement::Midpoints
    } else {
        return Err(Error::Parse(format!("first time {} is neither 0 nor h/2 (h = {h})", t[0])));
    };
    for (k, p) in t.windows(2).enumerate() {
        if ((p[1] - p[0]) - h).abs() > 1e-9 * h.max(p[1].abs()) {
            return Err(Error::Parse(format!("non-uniform time step at row {}", k + 2)));
        }
    }
    let n = match placement {
        Placement::Nodes => t.len() - 1,
        Placement::Midpoints => t.len(),
    };
    SampledSignal::new(TimeGrid::new(h, n)?, placement, v)
}

pub fn read_signal_file(path: &Path) -> Result<SampledSignal> {
    read_signal(std::fs::File::open(path).map_err(|e| io_context(path, e))?)
        .map_err(|e| with_path(path, e))
}

fn io_context(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| io_context(path, e))
}

fn vec_rows(v: &[f64]) -> Vec<Vec<String>> {
    v.iter().enumerate().map(|(i, x)| vec![i.to_string(), num(*x)]).collect()
}

fn sym2_rows(m: &SymMatrix) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for i in 0..m.n() {
        for j in 0..=i {
            rows.push(vec![i.to_string(), j.to_string(), num(m.get(i, j))]);
        }
    }
    rows
}

fn sym3_rows(t: &SymTensor3) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for i in 0..t.n() {
        for j in 0..=i {
            for k in 0..=j {
                rows.push(vec![i.to_string(), j.to_string(), k.to_string(), num(t.get(i, j, k))]);
            }
        }
    }
    rows
}

fn read_vec(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut out = vec![f64::NAN; rows.len()];
    for r in rows {
        let i = index(r[0], "index")?;
        if i >= out.len() {
            return Err(Error::Parse(format!("index {i} out of range")));
        }
        out[i] = r[1];
    }
    check_filled(&out)?;
    Ok(out)
}

fn check_filled(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| x.is_nan()) {
        Some(k) => Err(Error::Parse(format!("missing entry {k}"))),
        None => Ok(()),
    }
}

fn tri_size(count: usize, per: impl Fn(usize) -> usize) -> Result<usize> {
    (0..=count)
        .find(|&n| per(n) == count)
        .ok_or_else(|| Error::Parse(format!("{count} entries do not fill a lower triangle")))
}

fn read_sym2(rows: &[Vec<f64>]) -> Result<SymMatrix> {
    let n = tri_size(rows.len(), |n| n * (n + 1) / 2)?;
    let mut m = SymMatrix::zeros(n);
    let mut seen = vec![false; rows.len()];
    for r in rows {
        let (i, j) = (index(r[0], "i")?, index(r[1], "j")?);
        if i >= n || j > i {
            return Err(Error::Parse(format!("entry ({i}, {j}) outside the lower triangle of size {n}")));
        }
        seen[i * (i + 1) / 2 + j] = true;
        m.set(i, j, r[2]);
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(Error::Parse(format!("missing entry {k}")));
    }
    Ok(m)
}

fn read_sym3(rows: &[Vec<f64>]) -> Result<SymTensor3> {
    let n = tri_size(rows.len(), |n| n * (n + 1) * (n + 2) / 6)?;
    let mut t = SymTensor3::zeros(n);
    let mut seen = std::collections::HashSet::new();
    for r in rows {
        let (i, j, k) = (index(r[0], "i")?, index(r[1], "j")?, index(r[2], "k")?);
        if i >= n || j > i || k > j {
            return Err(Error::Parse(format!("entry ({i}, {j}, {k}) outside the lower triangle of size {n}")));
        }
        seen.insert((i, j, k));
        t.set(i, j, k, r[3]);
    }
    if seen.len() != rows.len() {
        return Err(Error::Parse("duplicate entries".into()));
    }
    Ok(t)
}

/// `k1.csv`, `k2.csv`, `k3.csv` holding kernel cell values on `grid`.
pub fn kernel_files(ks: &KernelSet, grid: &TimeGrid) -> Result<Vec<NamedFile>> {
    let mut out = vec![("k1.csv".to_string(), to_bytes(|b| write_rows(b, &["i", "value"], vec_rows(&ks.k1.cells(grid)?)))?)];
    if let Some(k) = &ks.k2 {
        let rows = sym2_rows(&k.cells(grid)?);
        out.push(("k2.csv".into(), to_bytes(|b| write_rows(b, &["i", "j", "value"], rows))?));
    }
    if let Some(k) = &ks.k3 {
        let rows = sym3_rows(&k.cells(grid)?);
        out.push(("k3.csv".into(), to_bytes(|b| write_rows(b, &["i", "j", "k", "value"], rows))?));
    }
    Ok(out)
}

/// Reads `k1.csv` and, up to `degree`, `k2.csv` and `k3.csv` from `dir`.
pub fn read_kernels(dir: &Path, degree: usize) -> Result<KernelSet> {
    if !(1..=3).contains(&degree) {
        return Err(Error::Parameter(format!("degree must be 1, 2 or 3, got {degree}")));
    }
    let load = |name: &str, cols: usize| -> Result<Vec<Vec<f64>>> {
        let p = dir.join(name);
        read_numeric(open(&p)?, cols).map_err(|e| with_path(&p, e))
    };
    let k1 = Kernel1::Grid(read_vec(&load("k1.csv", 2)?)?);
    let k2 = if degree >= 2 { Some(Kernel2::Grid(read_sym2(&load("k2.csv", 3)?)?)) } else { None };
    let k3 = if degree >= 3 { Some(Kernel3::Grid(read_sym3(&load("k3.csv", 4)?)?)) } else { None };
    Ok(KernelSet { k1, k2, k3 })
}

/// `m.csv`, `l.csv`, `c.csv` holding product-integration weights.
pub fn weight_files(w: &PiWeights) -> Result<Vec<NamedFile>> {
    let mut out = vec![("m.csv".to_string(), to_bytes(|b| write_rows(b, &["i", "value"], vec_rows(&w.m)))?)];
    if let Some(l) = &w.l {
        out.push(("l.csv".into(), to_bytes(|b| write_rows(b, &["i", "j", "value"], sym2_rows(l)))?));
    }
    if let Some(c) = &w.c {
        out.push(("c.csv".into(), to_bytes(|b| write_rows(b, &["i", "j", "k", "value"], sym3_rows(c)))?));
    }
    Ok(out)
}

pub fn read_weights(dir: &Path, degree: usize) -> Result<PiWeights> {
    if !(1..=3).contains(&degree) {
        return Err(Error::Parameter(format!("degree must be 1, 2 or 3, got {degree}")));
    }
    let load = |name: &str, cols: usize| -> Result<Vec<Vec<f64>>> {
        let p = dir.join(name);
        read_numeric(open(&p)?, cols).map_err(|e| with_path(&p, e))
    };
    let m = read_vec(&load("m.csv", 2)?)?;
    let l = if degree >= 2 { Some(read_sym2(&load("l.csv", 3)?)?) } else { None };
    let c = if degree >= 3 { Some(read_sym3(&load("c.csv", 4)?)?) } else { None };
    for (name, n) in [("l.csv", l.as_ref().map(|x| x.n())), ("c.csv", c.as_ref().map(|x| x.n()))] {
        if let Some(n) = n {
            if n != m.len() {
                return Err(Error::Parse(format!("{name} covers {n} cells, m.csv {}", m.len())));
            }
        }
    }
    Ok(PiWeights { m, l, c })
}

/// Per-channel `ch{c}_k1.csv`, `ch{c}_k2.csv` and `cross_{j}_{i}.csv` (full matrix).
pub fn vector_model_files(model: &VectorQuadraticModel, grid: &TimeGrid) -> Result<Vec<NamedFile>> {
    let mut out = Vec::new();
    for ch in 0..model.channels() {
        let k1 = vec_rows(&model.k1(ch).cells(grid)?);
        out.push((format!("ch{ch}_k1.csv"), to_bytes(|b| write_rows(b, &["i", "value"], k1))?));
        let k2 = sym2_rows(&model.k2(ch).cells(grid)?);
        out.push((format!("ch{ch}_k2.csv"), to_bytes(|b| write_rows(b, &["i", "j", "value"], k2))?));
    }
    let n = grid.n();
    for j in 0..model.channels() {
        for i in j + 1..model.channels() {
            if let Some(k) = model.cross(j, i) {
                let cells = k.cells(grid)?;
                let rows = (0..n * n).map(|r| vec![(r / n).to_string(), (r % n).to_string(), num(cells[r])]);
                out.push((format!("cross_{j}_{i}.csv"), to_bytes(|b| write_rows(b, &["a", "b", "value"], rows))?));
            }
        }
    }
    Ok(out)
}

pub fn read_vector_model(dir: &Path, channels: usize) -> Result<VectorQuadraticModel> {
    let load = |name: &str, cols: usize| -> Result<Option<Vec<Vec<f64>>>> {
        let p = dir.join(name);
        if !p.exists() {
            return Ok(None);
        }
        read_numeric(open(&p)?, cols).map(Some).map_err(|e| with_path(&p, e))
    };
    let need = |name: String, cols: usize| -> Result<Vec<Vec<f64>>> {
        load(&name, cols)?.ok_or_else(|| Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{}: not found", dir.join(&name).display()),
        )))
    };
    let mut k1 = Vec::new();
    let mut k2 = Vec::new();
    for ch in 0..channels {
        k1.push(Kernel1::Grid(read_vec(&need(format!("ch{ch}_k1.csv"), 2)?)?));
        k2.push(Kernel2::Grid(read_sym2(&need(format!("ch{ch}_k2.csv"), 3)?)?));
    }
    let mut model = VectorQuadraticModel::new(k1, k2)?;
    for j in 0..channels {
        for i in j + 1..channels {
            if let Some(rows) = load(&format!("cross_{j}_{i}.csv"), 3)? {
                let n = (rows.len() as f64).sqrt().round() as usize;
                if n * n != rows.len() {
                    return Err(Error::Parse(format!("cross_{j}_{i}.csv is not square")));
                }
                let mut data = vec![f64::NAN; n * n];
                for r in &rows {
                    let (a, b) = (index(r[0], "a")?, index(r[1], "b")?);
                    if a >= n || b >= n {
                        return Err(Error::Parse(format!("cross entry ({a}, {b}) out of range")));
                    }
                    data[a * n + b] = r[2];
                }
                check_filled(&data)?;
                model = model.with_cross(j, i, CrossKernel::Grid { n, data })?;
            }
        }
    }
    Ok(model)
}

pub fn write_response_table<W: Write>(w: W, table: &ResponseTable) -> Result<()> {
    let order = table.order();
    let header: &[&str] = if order == 2 {
        &["amplitude", "i", "l1", "value"]
    } else {
        &["amplitude", "i", "l1", "l2", "value"]
    };
    let mut rows = Vec::new();
    for (a, lat) in table.amplitudes().iter().zip(table.lattices()) {
        match lat {
            Lattice::Two(l) => {
                for i in 0..=l.n() {
                    for l1 in 0..=i {
                        rows.push(vec![num(*a), i.to_string(), l1.to_string(), num(l.get(i, l1))]);
                    }
                }
            }
            Lattice::Three(l) => {
                for i in 0..=l.n() {
                    for l1 in 0..=i {
                        for l2 in 0..=i - l1 {
                            rows.push(vec![num(*a), i.to_string(), l1.to_string(), l2.to_string(), num(l.get(i, l1, l2))]);
                        }
                    }
                }
            }
        }
    }
    write_rows(w, header, rows)
}

pub fn response_table_bytes(table: &ResponseTable) -> Result<Vec<u8>> {
    to_bytes(|b| write_response_table(b, table))
}

/// Reads a table written by [`write_response_table`]; `order` is 2 or 3.
pub fn read_response_table<R: Read>(r: R, grid: TimeGrid, order: usize) -> Result<ResponseTable> {
    let cols = match order {
        2 => 4,
        3 => 5,
        _ => return Err(Error::Parameter(format!("table order must be 2 or 3, got {order}"))),
    };
    let rows = read_numeric(r, cols)?;
    let n = grid.n();
    let mut amps: Vec<f64> = Vec::new();
    let mut lattices: Vec<(Lattice, usize)> = Vec::new();
    for row in &rows {
        let a = row[0];
        let k = match amps.iter().position(|&x| x == a) {
            Some(k) => k,
            None => {
                amps.push(a);
                let lat = if order == 2 { Lattice::Two(Lattice2::zeros(n)) } else { Lattice::Three(Lattice3::zeros(n)) };
                lattices.push((lat, 0));
                amps.len() - 1
            }
        };
        let i = index(row[1], "i")?;
        let l1 = index(row[2], "l1")?;
        let (lat, count) = &mut lattices[k];
        match lat {
            Lattice::Two(l) => {
                if i > n || l1 > i {
                    return Err(Error::Parse(format!("lattice point ({i}, {l1}) outside n = {n}")));
                }
                l.set(i, l1, row[3]);
            }
            Lattice::Three(l) => {
                let l2 = index(row[3], "l2")?;
                if i > n || l1 + l2 > i {
                    return Err(Error::Parse(format!("lattice point ({i}, {l1}, {l2}) outside n = {n}")));
                }
                l.set(i, l1, l2, row[4]);
            }
        }
        *count += 1;
    }
    let full = if order == 2 { (n + 1) * (n + 2) / 2 } else { (n + 1) * (n + 2) * (n + 3) / 6 };
    if let Some((_, c)) = lattices.iter().find(|(_, c)| *c != full) {
        return Err(Error::Parse(format!("lattice has {c} points, expected {full} for n = {n}")));
    }
    ResponseTable::new(grid, amps, lattices.into_iter().map(|(l, _)| l).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identification::{collect_order2, collect_order3};
    use crate::reference::RefModel;

    #[test]
    fn signal_round_trip_both_placements() {
        let g = TimeGrid::new(0.1, 7).unwrap();
        for s in [
            SampledSignal::sample_midpoints(g, |t| (3.0 * t).sin() / 7.0).unwrap(),
            SampledSignal::sample_nodes(g, |t| t.exp()).unwrap(),
        ] {
            let b = signal_bytes(&s).unwrap();
            let back = read_signal(b.as_slice()).unwrap();
            assert_eq!(back.values(), s.values());
            assert_eq!(back.placement(), s.placement());
            assert_eq!(back.grid().n(), 7);
            assert!((back.grid().h() - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn malformed_signals() {
        assert!(matches!(read_signal("t,value\n".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(read_signal("t,value\n0,1\n0.1,x\n".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(read_signal("t,value\n0,1\n0.1,2\n0.3,3\n".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(read_signal("t,value\n0.03,1\n0.1,2\n".as_bytes()), Err(Error::Parse(_))));
        assert!(read_signal("t,value\n0,1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn kernels_weights_and_tables_round_trip() {
        let dir = std::env::temp_dir().join(format!("volterra-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let g = TimeGrid::covering(1.0, 5).unwrap();
        let ks = KernelSet::cubic(
            Kernel1::analytic(|s| 1.0 + s),
            Kernel2::analytic(|a, b| a * b - 0.3),
            Kernel3::analytic(|a, b, c| a + b + c),
        );
        for (name, bytes) in kernel_files(&ks, &g).unwrap() {
            std::fs::write(dir.join(name), bytes).unwrap();
        }
        let back = read_kernels(&dir, 3).unwrap();
        assert_eq!(back.k1.cells(&g).unwrap(), ks.k1.cells(&g).unwrap());
        assert_eq!(back.k2.unwrap().cells(&g).unwrap(), ks.k2.as_ref().unwrap().cells(&g).unwrap());
        assert_eq!(back.k3.unwrap().cells(&g).unwrap(), ks.k3.as_ref().unwrap().cells(&g).unwrap());

        let w = PiWeights::integrated(&ks, &g).unwrap();
        for (name, bytes) in weight_files(&w).unwrap() {
            std::fs::write(dir.join(name), bytes).unwrap();
        }
        assert_eq!(read_weights(&dir, 3).unwrap(), w);

        let t2 = collect_order2(&RefModel::finite(3).unwrap(), g, &[0.5, -0.5]).unwrap();
        let b = response_table_bytes(&t2).unwrap();
        assert_eq!(read_response_table(b.as_slice(), g, 2).unwrap(), t2);
        let t3 = collect_order3(&RefModel::finite(3).unwrap(), g, &[0.5, 1.0, -1.0]).unwrap();
        let b = response_table_bytes(&t3).unwrap();
        assert_eq!(read_response_table(b.as_slice(), g, 3).unwrap(), t3);
        assert!(read_response_table(b.as_slice(), TimeGrid::covering(1.0, 6).unwrap(), 3).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn vector_model_round_trip() {
        let dir = std::env::temp_dir().join(format!("volterra-io-vec-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let g = TimeGrid::covering(2.0, 4).unwrap();
        let m = VectorQuadraticModel::new(
            vec![Kernel1::constant(1.0), Kernel1::analytic(|s| -s)],
            vec![Kernel2::constant(0.5), Kernel2::analytic(|a, b| a + b)],
        )
        .unwrap()
        .with_cross(0, 1, CrossKernel::analytic(|a, b| a - 2.0 * b))
        .unwrap();
        for (name, bytes) in vector_model_files(&m, &g).unwrap() {
            std::fs::write(dir.join(name), bytes).unwrap();
        }
        let back = read_vector_model(&dir, 2).unwrap();
        assert_eq!(back.cross(0, 1).unwrap().cells(&g).unwrap(), m.cross(0, 1).unwrap().cells(&g).unwrap());
        assert_eq!(back.k2(1).cells(&g).unwrap(), m.k2(1).cells(&g).unwrap());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
