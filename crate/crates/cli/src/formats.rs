//! On-disk formats: sample CSVs, JSON-lines metrics, graph edge lists and
//! network checkpoints (versioned binary with bitwise round-trip, plus a JSON
//! dump).

use anyhow::{bail, Context, Result};
use gwgen_core::metric_spaces::WeightedGraph;
use gwgen_core::neural::{Activation, AdamState, DenseNet, Layer};
use gwgen_core::trainer::IterationRecord;
use ndarray::{Array1, Array2};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Writes samples as CSV with a `dim0,dim1,...` header and 9 significant
/// digits.
pub fn write_samples_csv(path: &Path, samples: &Array2<f64>) -> Result<()> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    let d = samples.ncols();
    let header: Vec<String> = (0..d).map(|j| format!("dim{j}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for row in samples.rows() {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.8e}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Reads a sample CSV produced by [`write_samples_csv`] (or any headered
/// numeric CSV).
pub fn read_samples_csv(path: &Path) -> Result<Array2<f64>> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let reader = BufReader::new(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut dim = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if lineno == 0 && trimmed.starts_with("dim") {
            continue;
        }
        let cells: Result<Vec<f64>, _> = trimmed.split(',').map(|c| c.trim().parse()).collect();
        let cells = cells.with_context(|| format!("parsing CSV line {}", lineno + 1))?;
        if let Some(d) = dim {
            if cells.len() != d {
                bail!("CSV line {} has {} cells, expected {d}", lineno + 1, cells.len());
            }
        } else {
            dim = Some(cells.len());
        }
        rows.push(cells);
    }
    let d = dim.unwrap_or(0);
    if rows.is_empty() {
        bail!("CSV {} contains no samples", path.display());
    }
    Ok(Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j]))
}

/// Streams newline-delimited JSON metrics records.
pub struct JsonlWriter {
    writer: BufWriter<std::fs::File>,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = std::fs::File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        Ok(Self {
            writer: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, record: &IterationRecord) -> Result<()> {
        serde_json::to_writer(&mut self.writer, record)?;
        self.writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        Ok(self.writer.flush()?)
    }
}

/// Parses a graph edge list: one `i j weight` triple per line, 0-based
/// indices, `#` comments ignored; node count inferred as max index + 1.
pub fn read_graph_file(path: &Path) -> Result<WeightedGraph> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading graph {}", path.display()))?;
    parse_graph(&text)
}

pub fn parse_graph(text: &str) -> Result<WeightedGraph> {
    let mut edges = Vec::new();
    let mut max_node = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let parse_field = |s: Option<&str>, what: &str| -> Result<String> {
            s.map(str::to_owned)
                .ok_or_else(|| anyhow::anyhow!("line {}: missing {what}", lineno + 1))
        };
        let i: usize = parse_field(parts.next(), "source index")?
            .parse()
            .with_context(|| format!("line {}: bad source index", lineno + 1))?;
        let j: usize = parse_field(parts.next(), "target index")?
            .parse()
            .with_context(|| format!("line {}: bad target index", lineno + 1))?;
        let w: f64 = parse_field(parts.next(), "weight")?
            .parse()
            .with_context(|| format!("line {}: bad weight", lineno + 1))?;
        if parts.next().is_some() {
            bail!("line {}: trailing fields", lineno + 1);
        }
        max_node = max_node.max(i).max(j);
        edges.push((i, j, w));
    }
    if edges.is_empty() {
        bail!("graph file contains no edges");
    }
    Ok(WeightedGraph::new(max_node + 1, edges)?)
}

/// Writes the edge-list format read by [`read_graph_file`].
pub fn write_graph_file(path: &Path, graph: &WeightedGraph) -> Result<()> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# {} nodes, {} edges", graph.node_count, graph.edges.len())?;
    for (i, j, weight) in &graph.edges {
        writeln!(w, "{i} {j} {weight}")?;
    }
    Ok(())
}

const CKPT_MAGIC: &[u8; 4] = b"GWGN";
const CKPT_VERSION: u32 = 1;

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Identity => 1,
    }
}

fn activation_from(code: u8) -> Result<Activation> {
    match code {
        0 => Ok(Activation::Relu),
        1 => Ok(Activation::Identity),
        other => bail!("unknown activation code {other}"),
    }
}

fn write_f64s<W: Write>(w: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Versioned binary checkpoint: layer shapes, row-major parameters and the
/// optional Adam state. The round trip is bitwise faithful.
pub fn save_checkpoint(path: &Path, net: &DenseNet, adam: Option<&AdamState>) -> Result<()> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    w.write_all(CKPT_MAGIC)?;
    w.write_all(&CKPT_VERSION.to_le_bytes())?;
    w.write_all(&(net.layers().len() as u32).to_le_bytes())?;
    for layer in net.layers() {
        let (out, inp) = layer.weight.dim();
        w.write_all(&(out as u32).to_le_bytes())?;
        w.write_all(&(inp as u32).to_le_bytes())?;
        w.write_all(&[activation_code(layer.activation)])?;
        write_f64s(&mut w, layer.weight.iter().copied())?;
        write_f64s(&mut w, layer.bias.iter().copied())?;
    }
    match adam {
        None => w.write_all(&[0u8])?,
        Some(state) => {
            w.write_all(&[1u8])?;
            for v in [state.lr, state.beta1, state.beta2, state.eps_hat] {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&state.step.to_le_bytes())?;
            for idx in 0..net.layers().len() {
                write_f64s(&mut w, state.m_weights[idx].iter().copied())?;
                write_f64s(&mut w, state.v_weights[idx].iter().copied())?;
                write_f64s(&mut w, state.m_biases[idx].iter().copied())?;
                write_f64s(&mut w, state.v_biases[idx].iter().copied())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads a binary checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(DenseNet, Option<AdamState>)> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CKPT_MAGIC {
        bail!("not a checkpoint file");
    }
    let version = read_u32(&mut r)?;
    if version != CKPT_VERSION {
        bail!("unsupported checkpoint version {version}");
    }
    let layer_count = read_u32(&mut r)? as usize;
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let out = read_u32(&mut r)? as usize;
        let inp = read_u32(&mut r)? as usize;
        let mut code = [0u8; 1];
        r.read_exact(&mut code)?;
        let weight_vals = read_f64s(&mut r, out * inp)?;
        let bias_vals = read_f64s(&mut r, out)?;
        layers.push(Layer {
            weight: Array2::from_shape_vec((out, inp), weight_vals)?,
            bias: Array1::from_vec(bias_vals),
            activation: activation_from(code[0])?,
        });
    }
    let net = DenseNet::from_layers(layers)?;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let adam = if flag[0] == 1 {
        let lr = read_f64s(&mut r, 4)?;
        let step = read_u64(&mut r)?;
        let mut state = AdamState::new(&net, lr[0]);
        state.beta1 = lr[1];
        state.beta2 = lr[2];
        state.eps_hat = lr[3];
        state.step = step;
        for idx in 0..net.layers().len() {
            let (out, inp) = net.layers()[idx].weight.dim();
            state.m_weights[idx] =
                Array2::from_shape_vec((out, inp), read_f64s(&mut r, out * inp)?)?;
            state.v_weights[idx] =
                Array2::from_shape_vec((out, inp), read_f64s(&mut r, out * inp)?)?;
            state.m_biases[idx] = Array1::from_vec(read_f64s(&mut r, out)?);
            state.v_biases[idx] = Array1::from_vec(read_f64s(&mut r, out)?);
        }
        Some(state)
    } else {
        None
    };
    Ok((net, adam))
}

/// JSON checkpoint mirror (human-readable; not bitwise faithful).
#[derive(serde::Serialize, serde::Deserialize)]
pub struct CheckpointJson {
    pub version: u32,
    pub layers: Vec<LayerJson>,
}

#[derive(serde::Serialize, serde::Deserialize)]
pub struct LayerJson {
    pub out_dim: usize,
    pub in_dim: usize,
    pub activation: String,
    /// Row-major weights.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn save_checkpoint_json(path: &Path, net: &DenseNet) -> Result<()> {
    let layers = net
        .layers()
        .iter()
        .map(|l| LayerJson {
            out_dim: l.weight.nrows(),
            in_dim: l.weight.ncols(),
            activation: match l.activation {
                Activation::Relu => "relu".into(),
                Activation::Identity => "identity".into(),
            },
            weight: l.weight.iter().copied().collect(),
            bias: l.bias.iter().copied().collect(),
        })
        .collect();
    let doc = CheckpointJson {
        version: CKPT_VERSION,
        layers,
    };
    std::fs::write(path, serde_json::to_string_pretty(&doc)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use gwgen_core::neural::orthogonal_init;

    #[test]
    fn csv_round_trip_preserves_counts_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.csv");
        let samples = Array2::from_shape_fn((17, 3), |(i, j)| (i as f64) * 0.1 - (j as f64) * 7.3);
        write_samples_csv(&path, &samples).unwrap();
        let back = read_samples_csv(&path).unwrap();
        assert_eq!(back.dim(), (17, 3));
        for (a, b) in samples.iter().zip(back.iter()) {
            assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0));
        }
    }

    #[test]
    fn graph_file_round_trip_with_comments() {
        let text = "# a comment\n0 1 1.5\n1 2 2.0 # trailing comment\n\n2 3 0.5\n";
        let g = parse_graph(text).unwrap();
        assert_eq!(g.node_count, 4);
        assert_eq!(g.edges.len(), 3);
        assert_eq!(g.edges[1], (1, 2, 2.0));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("graph.txt");
        write_graph_file(&path, &g).unwrap();
        let back = read_graph_file(&path).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn graph_file_rejects_garbage() {
        assert!(parse_graph("0 1\n").is_err());
        assert!(parse_graph("a b 1.0\n").is_err());
        assert!(parse_graph("").is_err());
        // Self-loop rejected by the graph validator.
        assert!(parse_graph("1 1 2.0\n").is_err());
    }

    #[test]
    fn binary_checkpoint_is_bitwise_faithful() {
        let mut net = DenseNet::mlp(5, &[7, 6], 3).unwrap();
        orthogonal_init(&mut net, 11);
        let mut adam = AdamState::new(&net, 2e-4);
        adam.step = 42;
        adam.m_weights[0][[0, 0]] = 0.123456789123456789;

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        save_checkpoint(&path, &net, Some(&adam)).unwrap();
        let (back, back_adam) = load_checkpoint(&path).unwrap();
        let back_adam = back_adam.unwrap();

        for (a, b) in net.layers().iter().zip(back.layers()) {
            for (x, y) in a.weight.iter().zip(b.weight.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in a.bias.iter().zip(b.bias.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            assert_eq!(a.activation, b.activation);
        }
        assert_eq!(back_adam.step, 42);
        assert_eq!(
            back_adam.m_weights[0][[0, 0]].to_bits(),
            adam.m_weights[0][[0, 0]].to_bits()
        );
        assert_eq!(back_adam.lr.to_bits(), adam.lr.to_bits());
    }

    #[test]
    fn checkpoint_rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.ckpt");
        std::fs::write(&path, b"NOPE....").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
