//! Model file format.
//!
//! Layout: an 8-byte magic, a little-endian u32 format version, a
//! little-endian u64 header length, a JSON header (hyperparameters, slot
//! order, matrix shapes, vocabularies, tagset), the matrices as raw
//! little-endian 64-bit floats in header-declared order, and a trailing
//! CRC-32C over header plus floats. Accumulators are stored too, so a loaded
//! model can resume training exactly where it stopped.
//!
//! The checksum is verified before the header is parsed: a corrupted file
//! reports `ChecksumMismatch` no matter which byte was damaged.

use std::path::Path;

use crc::{Crc, CRC_32_ISCSI};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{VocabParts, Vocabularies};
use crate::linalg::Mat;
use crate::model::{Hyper, ModelState, Params};
use crate::morph::{Slot, TagsetConfig};
use crate::scalar::Scalar;

const MAGIC: [u8; 8] = *b"AYIRTMDL";
const VERSION: u32 = 1;

const CASTAGNOLI: Crc<u32> = Crc::<u32>::new(&CRC_32_ISCSI);

/// CRC-32C (Castagnoli) checksum, as used by the model file trailer.
pub fn crc32c(bytes: &[u8]) -> u32 {
    CASTAGNOLI.checksum(bytes)
}

/// Errors from model file reading and writing.
#[derive(Debug, Error)]
pub enum StorageError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file (bad magic)")]
    InvalidMagic,
    #[error("model file version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("model file is truncated")]
    TruncatedFile,
    #[error("model file checksum mismatch")]
    ChecksumMismatch,
    #[error("model file header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("model file is inconsistent: {0}")]
    Shape(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    hyper: Hyper,
    slots: Vec<Slot>,
    slot_dims: Vec<usize>,
    matrices: Vec<MatrixMeta>,
    vocab: VocabParts,
    tagset: TagsetConfig,
    vocab_fingerprint: u32,
}

/// Everything a model file carries: enough to decode with no other inputs.
#[derive(Debug, Clone)]
pub struct LoadedModel<F> {
    pub state: ModelState<F>,
    pub vocab: Vocabularies,
    pub tagset: TagsetConfig,
}

fn matrix_metas<F: Scalar>(state: &ModelState<F>) -> Vec<MatrixMeta> {
    let mut metas = Vec::new();
    let mut push = |name: String, rows: usize, cols: usize| {
        metas.push(MatrixMeta { name, rows, cols });
    };
    for prefix in ["", "acc."] {
        let p: &Params<F> = if prefix.is_empty() {
            state.params()
        } else {
            state.accumulators()
        };
        for (slot, m) in state.slots().iter().zip(&p.emb) {
            push(format!("{prefix}emb.{slot}"), m.rows(), m.cols());
        }
        push(format!("{prefix}w1"), p.w1.rows(), p.w1.cols());
        push(format!("{prefix}b1"), 1, p.b1.len());
        push(format!("{prefix}w2"), p.w2.rows(), p.w2.cols());
        push(format!("{prefix}b2"), 1, p.b2.len());
        push(format!("{prefix}w3"), p.w3.rows(), p.w3.cols());
        push(format!("{prefix}b3"), 1, p.b3.len());
    }
    metas
}

fn write_floats<F: Scalar>(out: &mut Vec<u8>, values: &[F]) {
    for &v in values {
        out.extend_from_slice(&v.to_f64().to_le_bytes());
    }
}

fn params_floats<F: Scalar>(p: &Params<F>) -> Vec<&[F]> {
    let mut sections: Vec<&[F]> = p.emb.iter().map(|m| m.as_slice()).collect();
    sections.extend([
        p.w1.as_slice(),
        p.b1.as_slice(),
        p.w2.as_slice(),
        p.b2.as_slice(),
        p.w3.as_slice(),
        p.b3.as_slice(),
    ]);
    sections
}

/// Serializes a model (with its vocabularies and tagset) to bytes.
pub fn save_model_bytes<F: Scalar>(
    state: &ModelState<F>,
    vocab: &Vocabularies,
    tagset: &TagsetConfig,
) -> Result<Vec<u8>, StorageError> {
    let header = Header {
        hyper: state.hyper().clone(),
        slots: state.slots().to_vec(),
        slot_dims: state.slot_dims().to_vec(),
        matrices: matrix_metas(state),
        vocab: vocab.to_parts(),
        tagset: tagset.clone(),
        vocab_fingerprint: vocab.fingerprint(),
    };
    let mut payload = serde_json::to_vec(&header)?;
    let header_len = payload.len();
    for section in params_floats(state.params()) {
        write_floats(&mut payload, section);
    }
    for section in params_floats(state.accumulators()) {
        write_floats(&mut payload, section);
    }

    let mut out = Vec::with_capacity(payload.len() + 24);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_len as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32c(&payload).to_le_bytes());
    Ok(out)
}

pub fn save_model<F: Scalar>(
    path: &Path,
    state: &ModelState<F>,
    vocab: &Vocabularies,
    tagset: &TagsetConfig,
) -> Result<(), StorageError> {
    let bytes = save_model_bytes(state, vocab, tagset)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Deserializes a model from bytes. Inverse of [`save_model_bytes`]: the
/// loaded state reproduces the saved state's scores bit for bit (at `f64`).
pub fn load_model_bytes<F: Scalar>(bytes: &[u8]) -> Result<LoadedModel<F>, StorageError> {
    const PREAMBLE: usize = 8 + 4 + 8;
    if bytes.len() < PREAMBLE + 4 {
        return Err(StorageError::TruncatedFile);
    }
    if bytes[..8] != MAGIC {
        return Err(StorageError::InvalidMagic);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(StorageError::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = &bytes[PREAMBLE..bytes.len() - 4];
    if body.len() < header_len {
        return Err(StorageError::TruncatedFile);
    }
    let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32c(body) != stored_crc {
        return Err(StorageError::ChecksumMismatch);
    }

    let header: Header = serde_json::from_slice(&body[..header_len])?;
    let floats = &body[header_len..];
    let expected: usize = header.matrices.iter().map(|m| m.rows * m.cols).sum();
    if floats.len() != expected * 8 {
        return Err(StorageError::Shape(format!(
            "expected {} matrix bytes, found {}",
            expected * 8,
            floats.len()
        )));
    }

    let mut offset = 0;
    let mut read_mat = |rows: usize, cols: usize| -> Mat<F> {
        let mut m = Mat::zeros(rows, cols);
        for v in m.as_mut_slice() {
            let raw = f64::from_le_bytes(floats[offset..offset + 8].try_into().unwrap());
            *v = F::from_f64(raw);
            offset += 8;
        }
        m
    };
    let n_slots = header.slots.len();
    let expected_names: Vec<String> = {
        let mut names = Vec::new();
        for prefix in ["", "acc."] {
            for slot in &header.slots {
                names.push(format!("{prefix}emb.{slot}"));
            }
            for tail in ["w1", "b1", "w2", "b2", "w3", "b3"] {
                names.push(format!("{prefix}{tail}"));
            }
        }
        names
    };
    if header.matrices.len() != expected_names.len()
        || header
            .matrices
            .iter()
            .zip(&expected_names)
            .any(|(m, n)| &m.name != n)
    {
        return Err(StorageError::Shape("unexpected matrix list".into()));
    }

    let mut read_params = |metas: &[MatrixMeta]| -> Params<F> {
        let emb: Vec<Mat<F>> = metas[..n_slots]
            .iter()
            .map(|m| read_mat(m.rows, m.cols))
            .collect();
        let w1 = read_mat(metas[n_slots].rows, metas[n_slots].cols);
        let b1 = read_mat(1, metas[n_slots + 1].cols).as_slice().to_vec();
        let w2 = read_mat(metas[n_slots + 2].rows, metas[n_slots + 2].cols);
        let b2 = read_mat(1, metas[n_slots + 3].cols).as_slice().to_vec();
        let w3 = read_mat(metas[n_slots + 4].rows, metas[n_slots + 4].cols);
        let b3 = read_mat(1, metas[n_slots + 5].cols).as_slice().to_vec();
        Params {
            emb,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
        }
    };
    let half = header.matrices.len() / 2;
    let params = read_params(&header.matrices[..half]);
    let acc = read_params(&header.matrices[half..]);

    let vocab = Vocabularies::from_parts(header.vocab);
    let state = ModelState::from_parts(
        header.hyper,
        header.slots,
        header.slot_dims,
        params,
        acc,
        header.vocab_fingerprint,
    );
    Ok(LoadedModel {
        state,
        vocab,
        tagset: header.tagset,
    })
}

pub fn load_model<F: Scalar>(path: &Path) -> Result<LoadedModel<F>, StorageError> {
    let bytes = std::fs::read(path)?;
    load_model_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{read_corpus_str, IdBundle, ReadMode};
    use crate::morph::TagStats;

    fn setup() -> (TagsetConfig, Vocabularies, ModelState<f64>) {
        let cfg = TagsetConfig::builtin("tr").unwrap();
        let text = "<S>\n\
            dolar\tdolar+Noun+3sg+Pnon+Nominative\tdola+Verb+Pos+Aorist+3sg\n\
            evi\tev+Noun+3sg+Pnon+Accusative\tev+Noun+3sg+P3sg+Nominative\n\
            </S>\n";
        let ss = read_corpus_str(text, ReadMode::Train, &cfg).unwrap();
        let vocab = Vocabularies::build(&ss, &cfg, 1, &mut TagStats::default()).unwrap();
        let hyper = Hyper {
            window_len: 3,
            root_dim: 4,
            pos_dim: 3,
            feat_dim: 2,
            h1: 4,
            h2: 3,
            seed: 77,
            ..Hyper::default()
        };
        let state = ModelState::init(hyper, &cfg, &vocab).unwrap();
        (cfg, vocab, state)
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let (cfg, vocab, mut state) = setup();
        // Touch the accumulators so their round trip is exercised too.
        let window = [IdBundle::bos(), IdBundle::bos(), IdBundle::bos()];
        let (_, grads) = state.backward(&window, true).unwrap();
        state.adagrad_step(&grads);

        let bytes = save_model_bytes(&state, &vocab, &cfg).unwrap();
        let loaded: LoadedModel<f64> = load_model_bytes(&bytes).unwrap();
        assert_eq!(loaded.state.flatten_params(), state.flatten_params());
        assert_eq!(loaded.state.hyper(), state.hyper());
        assert_eq!(loaded.state.slots(), state.slots());
        assert_eq!(loaded.vocab, vocab);
        assert_eq!(loaded.state.vocab_fingerprint(), vocab.fingerprint());
        assert_eq!(loaded.tagset.boundary, cfg.boundary);
        assert_eq!(loaded.tagset.active_slots(), cfg.active_slots());

        // Scores agree bit for bit, accumulators included.
        let (p0, p1) = state.forward_window(&window).unwrap();
        let (q0, q1) = loaded.state.forward_window(&window).unwrap();
        assert_eq!(p0, q0);
        assert_eq!(p1, q1);
        let (_, g1) = state.backward(&window, false).unwrap();
        let (_, g2) = loaded.state.backward(&window, false).unwrap();
        assert_eq!(g1.flatten(&state), g2.flatten(&loaded.state));

        // Saving the loaded model reproduces the bytes exactly.
        let again = save_model_bytes(&loaded.state, &loaded.vocab, &loaded.tagset).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn corrupted_byte_is_detected_wherever_it_lands() {
        let (cfg, vocab, state) = setup();
        let bytes = save_model_bytes(&state, &vocab, &cfg).unwrap();
        // Flip a byte deep in the float section...
        let mut floats = bytes.clone();
        let idx = bytes.len() - 100;
        floats[idx] ^= 0x40;
        assert!(matches!(
            load_model_bytes::<f64>(&floats),
            Err(StorageError::ChecksumMismatch)
        ));
        // ...and one in the JSON header.
        let mut header = bytes.clone();
        header[24] ^= 0x01;
        assert!(matches!(
            load_model_bytes::<f64>(&header),
            Err(StorageError::ChecksumMismatch)
        ));
    }

    #[test]
    fn truncation_magic_and_version_are_detected() {
        let (cfg, vocab, state) = setup();
        let bytes = save_model_bytes(&state, &vocab, &cfg).unwrap();
        assert!(matches!(
            load_model_bytes::<f64>(&bytes[..bytes.len() / 2]),
            Err(StorageError::TruncatedFile) | Err(StorageError::ChecksumMismatch)
        ));
        assert!(matches!(
            load_model_bytes::<f64>(&bytes[..10]),
            Err(StorageError::TruncatedFile)
        ));

        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(
            load_model_bytes::<f64>(&magic),
            Err(StorageError::InvalidMagic)
        ));

        let mut version = bytes;
        version[8] = 99;
        assert!(matches!(
            load_model_bytes::<f64>(&version),
            Err(StorageError::VersionMismatch {
                found: 99,
                expected: VERSION
            })
        ));
    }

    #[test]
    fn file_round_trip() {
        let (cfg, vocab, state) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&path, &state, &vocab, &cfg).unwrap();
        let loaded: LoadedModel<f64> = load_model(&path).unwrap();
        assert_eq!(loaded.state.flatten_params(), state.flatten_params());
    }
}
