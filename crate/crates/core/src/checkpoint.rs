//! Plain-text checkpoints of an [`EncoderState`].
//!
//! The file starts with a version line and the architecture, then lists
//! every matrix as a `name rows cols` line followed by one line of values.
//! Values use shortest round-trip formatting, so loading is exact.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{Architecture, EncoderState};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const MAGIC: &str = "blnn-checkpoint v1";
const LAYER_PARTS: [&str; 7] = [
    "weight",
    "bias",
    "prelu_slope",
    "bn_gamma",
    "bn_beta",
    "running_mean",
    "running_var",
];
const PREDICTOR_PARTS: [&str; 5] = ["w1", "b1", "prelu_slope", "w2", "b2"];

fn named_matrices(state: &EncoderState) -> Vec<(String, &Matrix)> {
    let mut out = Vec::new();
    for (side, layers) in [("online", &state.online), ("target", &state.target)] {
        for (l, layer) in layers.iter().enumerate() {
            for (part, m) in LAYER_PARTS.iter().zip(layer.all_matrices()) {
                out.push((format!("{side}.{l}.{part}"), m));
            }
        }
    }
    let p = &state.predictor;
    for (part, m) in PREDICTOR_PARTS.iter().zip([&p.w1, &p.b1, &p.prelu_slope, &p.w2, &p.b2]) {
        out.push((format!("predictor.{part}"), m));
    }
    out
}

fn matrices_mut(state: &mut EncoderState) -> Vec<&mut Matrix> {
    let mut out: Vec<&mut Matrix> = Vec::new();
    for layer in state.online.iter_mut().chain(state.target.iter_mut()) {
        out.extend(layer.all_matrices_mut());
    }
    let p = &mut state.predictor;
    out.extend([&mut p.w1, &mut p.b1, &mut p.prelu_slope, &mut p.w2, &mut p.b2]);
    out
}

pub fn to_text(state: &EncoderState) -> String {
    let a = &state.arch;
    let dims: Vec<String> = a.encoder_dims.iter().map(|d| d.to_string()).collect();
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "in_dim {}", state.in_dim());
    let _ = writeln!(s, "encoder_dims {}", dims.join(","));
    let _ = writeln!(s, "predictor_hidden {}", a.predictor_hidden);
    let _ = writeln!(s, "batch_norm {}", a.batch_norm);
    let _ = writeln!(s, "bn_momentum {}", a.bn_momentum);
    for (name, m) in named_matrices(state) {
        let _ = writeln!(s, "{name} {} {}", m.rows(), m.cols());
        let vals: Vec<String> = m.data().iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", vals.join(" "));
    }
    s
}

pub fn from_text(text: &str, origin: &Path) -> Result<EncoderState> {
    let mut lines = text.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, &str)> {
        lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::parse(origin, 0, format!("unexpected end of file, expected {what}")))
    };
    let (ln, magic) = next("header")?;
    if magic.trim() != MAGIC {
        return Err(Error::parse(origin, ln, format!("expected {MAGIC:?}")));
    }
    let mut field = |key: &str| -> Result<(usize, String)> {
        let (ln, line) = next(key)?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok((ln, v.trim().to_string())),
            _ => Err(Error::parse(origin, ln, format!("expected {key}"))),
        }
    };
    let bad = |ln: usize, key: &str| Error::parse(origin, ln, format!("bad value for {key}"));
    let (ln, v) = field("in_dim")?;
    let in_dim: usize = v.parse().map_err(|_| bad(ln, "in_dim"))?;
    let (ln, v) = field("encoder_dims")?;
    let encoder_dims = v
        .split(',')
        .map(|d| d.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| bad(ln, "encoder_dims"))?;
    let (ln, v) = field("predictor_hidden")?;
    let predictor_hidden = v.parse().map_err(|_| bad(ln, "predictor_hidden"))?;
    let (ln, v) = field("batch_norm")?;
    let batch_norm = v.parse().map_err(|_| bad(ln, "batch_norm"))?;
    let (ln, v) = field("bn_momentum")?;
    let bn_momentum = v.parse().map_err(|_| bad(ln, "bn_momentum"))?;
    let arch = Architecture {
        encoder_dims,
        predictor_hidden,
        batch_norm,
        bn_momentum,
    };
    if in_dim == 0 {
        return Err(Error::parse(origin, 2, "in_dim must be positive"));
    }

    // A throwaway initialization fixes the shapes; every value is overwritten.
    let mut state = EncoderState::new(arch, in_dim, &mut ChaCha8Rng::seed_from_u64(0))?;
    let names: Vec<(String, (usize, usize))> = named_matrices(&state).into_iter().map(|(n, m)| (n, m.shape())).collect();
    for ((name, shape), slot) in names.into_iter().zip(matrices_mut(&mut state)) {
        let (ln, header) = next(&name)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        let found = match parts[..] {
            [n, r, c] if n == name => (r.parse().ok(), c.parse().ok()),
            _ => return Err(Error::parse(origin, ln, format!("expected matrix {name}"))),
        };
        if found != (Some(shape.0), Some(shape.1)) {
            return Err(Error::parse(origin, ln, format!("{name} should be {}x{}", shape.0, shape.1)));
        }
        let (ln, body) = next(&name)?;
        let vals = body
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::parse(origin, ln, format!("bad value in {name}")))?;
        if vals.len() != shape.0 * shape.1 {
            return Err(Error::parse(origin, ln, format!("{name}: {} values, expected {}", vals.len(), shape.0 * shape.1)));
        }
        *slot = Matrix::from_vec(shape.0, shape.1, vals)?;
    }
    if let Some((ln, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::parse(origin, ln + 1, format!("unexpected trailing content {extra:?}")));
    }
    Ok(state)
}

pub fn save(path: impl AsRef<Path>, state: &EncoderState) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_text(state)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<EncoderState> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> EncoderState {
        let arch = Architecture {
            encoder_dims: vec![5, 3],
            predictor_hidden: 4,
            ..Architecture::default()
        };
        let mut s = EncoderState::new(arch, 6, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        s.target[1].running_var.data_mut()[2] = 1.0 / 3.0;
        s.online[0].bias.data_mut()[0] = -1e-310;
        s
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let s = state();
        save(&path, &s).unwrap();
        assert_eq!(load(&path).unwrap(), s);
    }

    #[test]
    fn corrupt_files_name_the_line() {
        let text = to_text(&state());
        let origin = Path::new("m.ckpt");
        assert!(from_text("nonsense", origin).is_err());
        let truncated: String = text.lines().take(9).collect::<Vec<_>>().join("\n");
        assert!(from_text(&truncated, origin).is_err());
        let broken = text.replacen("online.0.bias 1 5", "online.0.bias 1 4", 1);
        match from_text(&broken, origin) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 9),
            other => panic!("{other:?}"),
        }
        let trailing = format!("{text}extra\n");
        assert!(from_text(&trailing, origin).is_err());
    }
}
