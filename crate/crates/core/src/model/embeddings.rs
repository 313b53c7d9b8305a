//! Plain-text pretrained vectors: a `count dim` header line, then one
//! `token v1 … v_dim` line per entry. Only single-character tokens are kept.

use std::collections::HashMap;
use std::path::Path;

use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub dim: usize,
    pub vectors: HashMap<char, Vec<f64>>,
}

pub fn load_embeddings(path: &Path) -> Result<Embeddings, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(path.display().to_string(), e))?;
    parse_embeddings(&text)
}

pub fn parse_embeddings(text: &str) -> Result<Embeddings, Error> {
    let bad = |line: usize, msg: String| Error::Config(format!("embedding file line {line}: {msg}"));
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (count, dim) = match fields.as_slice() {
        [c, d] => (
            c.parse::<usize>().map_err(|e| bad(1, e.to_string()))?,
            d.parse::<usize>().map_err(|e| bad(1, e.to_string()))?,
        ),
        _ => return Err(bad(1, "expected `count dim`".into())),
    };
    if dim == 0 {
        return Err(bad(1, "dimension must be positive".into()));
    }
    let mut vectors = HashMap::new();
    let mut seen = 0;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        seen += 1;
        let mut fields = line.split_whitespace();
        let token = fields.next().unwrap();
        let values = fields
            .map(|f| f.parse::<f64>().map_err(|e| bad(i + 1, e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != dim {
            return Err(bad(i + 1, format!("{} values, expected {dim}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad(i + 1, "non-finite value".into()));
        }
        let mut chars = token.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            vectors.insert(c, values);
        }
    }
    if seen != count {
        log::warn!("embedding header declares {count} entries, found {seen}");
    }
    Ok(Embeddings { dim, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_char_tokens() {
        let e = parse_embeddings("3 2\n南 0.5 -1\n京 1e-2 2\n南京 0 0\n").unwrap();
        assert_eq!(e.dim, 2);
        assert_eq!(e.vectors.len(), 2);
        assert_eq!(e.vectors[&'京'], vec![0.01, 2.0]);
    }

    #[test]
    fn rejects_wrong_width() {
        assert!(parse_embeddings("1 3\n南 0.5 -1\n").is_err());
        assert!(parse_embeddings("").is_err());
        assert!(parse_embeddings("x y\n").is_err());
    }
}
