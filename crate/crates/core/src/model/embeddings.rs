//! Optional pretrained token embeddings.
//!
//! The file format is one token per line followed by its vector, all
//! space-separated:
//!
//! ```text
//! assertEquals 0.12 -0.03 … (embedding-width floats)
//! ```
//!
//! Vocabulary tokens absent from the file keep randomly initialized rows; the
//! random rows are sampled for the whole table up front, so the result is
//! deterministic in the RNG seed regardless of file ordering.

use std::fs;
use std::path::Path;

use rand_core::RngCore;

use crate::num::{Scalar, TensorData};

use super::params::INIT_SCALE;
use super::vocab::Vocab;
use super::ModelError;

/// Builds a `vocab × dim` embedding table from a pretrained-vector file.
/// Returns the table and how many vocabulary tokens the file covered.
pub fn load_pretrained<S: Scalar>(
    path: &Path,
    vocab: &Vocab,
    dim: usize,
    rng: &mut impl RngCore,
) -> Result<(TensorData<S>, usize), ModelError> {
    let mut table = TensorData::<S>::uniform(
        vec![vocab.len(), dim],
        -INIT_SCALE,
        INIT_SCALE,
        rng,
    );
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;

    let mut found = 0usize;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("non-blank line has a first field");
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| ModelError::Pretrained {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: format!("{f:?} is not a number"),
                })
            })
            .collect::<Result<_, _>>()?;
        if values.len() != dim {
            return Err(ModelError::Pretrained {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("expected {dim} values, found {}", values.len()),
            });
        }
        if let Some(id) = vocab.id(token) {
            let row_start = id * dim;
            for (slot, v) in table.data_mut()[row_start..row_start + dim]
                .iter_mut()
                .zip(&values)
            {
                *slot = S::from_f64(*v);
            }
            found += 1;
        }
    }
    Ok((table, found))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexer::TokenSeq;
    use rand_chacha::ChaCha8Rng;
    use rand_core::SeedableRng;
    use std::io::Write;

    fn vocab() -> Vocab {
        let corpus: Vec<TokenSeq> = vec!["alpha beta gamma"
            .split_whitespace()
            .map(String::from)
            .collect()];
        Vocab::build(&corpus, 1, None)
    }

    fn write_file(dir: &tempfile::TempDir, content: &str) -> std::path::PathBuf {
        let path = dir.path().join("vectors.txt");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn known_tokens_take_file_rows_and_unknown_keep_random() {
        let v = vocab();
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "alpha 1.0 2.0\nnope 9.0 9.0\ngamma -1.0 0.5\n");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (table, found) = load_pretrained::<f32>(&path, &v, 2, &mut rng).unwrap();
        assert_eq!(found, 2);
        let alpha = v.id("alpha").unwrap();
        assert_eq!(table.row(alpha), &[1.0, 2.0]);
        let gamma = v.id("gamma").unwrap();
        assert_eq!(table.row(gamma), &[-1.0, 0.5]);
        // beta was missing: its row stays inside the random-init range.
        let beta = v.id("beta").unwrap();
        assert!(table
            .row(beta)
            .iter()
            .all(|&x| (-INIT_SCALE as f32..INIT_SCALE as f32).contains(&x)));
    }

    #[test]
    fn result_is_independent_of_file_order() {
        let v = vocab();
        let dir = tempfile::tempdir().unwrap();
        let forward = write_file(&dir, "alpha 1.0 2.0\ngamma -1.0 0.5\n");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, _) = load_pretrained::<f32>(&forward, &v, 2, &mut rng).unwrap();
        let reversed = write_file(&dir, "gamma -1.0 0.5\nalpha 1.0 2.0\n");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (b, _) = load_pretrained::<f32>(&reversed, &v, 2, &mut rng).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn malformed_rows_carry_line_numbers() {
        let v = vocab();
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "alpha 1.0 2.0\nbeta 0.5\n");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        match load_pretrained::<f32>(&path, &v, 2, &mut rng) {
            Err(ModelError::Pretrained { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected a pretrained error, got {other:?}"),
        }

        let path = write_file(&dir, "alpha 1.0 oops\n");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            load_pretrained::<f32>(&path, &v, 2, &mut rng),
            Err(ModelError::Pretrained { line: 1, .. })
        ));
    }
}
