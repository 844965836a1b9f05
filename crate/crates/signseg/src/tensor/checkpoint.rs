//! Named parameter storage and its on-disk form.
//!
//! A checkpoint is a text manifest followed by raw tensor payloads:
//!
//! ```text
//! signseg-checkpoint v1
//! meta stage 1
//! tensor seg.block0.gcn.w f64 2 6 64 train
//! tensor seg.block0.bn.running_mean f64 1 64 stat
//! end
//! <little-endian f64 payload, tensors in manifest order>
//! ```
//!
//! Entries keep insertion order everywhere (iteration, manifest, payload), so
//! saving the same store twice produces identical bytes.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::Tensor;
use crate::error::{Error, Result};

const MAGIC: &str = "signseg-checkpoint v1";

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    value: Tensor,
    trainable: bool,
}

/// Ordered, named tensor collection with string metadata.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
    meta: Vec<(String, String)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a tensor under a unique whitespace-free name.
    pub fn insert(&mut self, name: &str, value: Tensor, trainable: bool) -> Result<()> {
        if name.is_empty() || name.chars().any(|c| c.is_whitespace()) {
            return Err(Error::config(format!(
                "parameter name {:?} must be non-empty and whitespace-free",
                name
            )));
        }
        if self.index.contains_key(name) {
            return Err(Error::config(format!("duplicate parameter name {:?}", name)));
        }
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(Entry {
            name: name.to_string(),
            value,
            trainable,
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = *self.index.get(name)?;
        Some(&mut self.entries[i].value)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn is_trainable(&self, name: &str) -> Option<bool> {
        self.index.get(name).map(|&i| self.entries[i].trainable)
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::config(format!("unknown parameter {:?}", name)))?;
        self.entries[i].trainable = trainable;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All names in insertion order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    /// Names of trainable entries in insertion order.
    pub fn trainable_names(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.name.clone())
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor, bool)> {
        self.entries
            .iter()
            .map(|e| (e.name.as_str(), &e.value, e.trainable))
    }

    /// Total element count over trainable entries.
    pub fn trainable_numel(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.value.numel())
            .sum()
    }

    pub fn set_meta(&mut self, key: &str, value: &str) {
        if let Some(slot) = self.meta.iter_mut().find(|(k, _)| k == key) {
            slot.1 = value.to_string();
        } else {
            self.meta.push((key.to_string(), value.to_string()));
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn meta_entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.meta.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Write `store` to `path`; identical stores produce identical bytes.
pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", MAGIC)?;
    for (k, v) in store.meta_entries() {
        if k.chars().any(|c| c.is_whitespace()) || v.contains('\n') {
            return Err(Error::config(format!(
                "checkpoint meta {:?} has whitespace in key or newline in value",
                k
            )));
        }
        writeln!(w, "meta {} {}", k, v)?;
    }
    for (name, tensor, trainable) in store.iter() {
        write!(w, "tensor {} f64 {}", name, tensor.rank())?;
        for d in tensor.shape() {
            write!(w, " {}", d)?;
        }
        writeln!(w, " {}", if trainable { "train" } else { "stat" })?;
    }
    writeln!(w, "end")?;
    for (_, tensor, _) in store.iter() {
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<ParamStore> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);

    let parse_err = |line: usize, msg: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        msg,
    };

    // header: read up to and including the "end" line, byte by byte to keep
    // the payload boundary exact
    let mut header = String::new();
    let mut lineno = 0;
    let mut store = ParamStore::new();
    let mut pending: Vec<(String, Vec<usize>, bool)> = Vec::new();
    loop {
        header.clear();
        let mut byte = [0u8; 1];
        loop {
            let n = r.read(&mut byte)?;
            if n == 0 {
                return Err(parse_err(lineno + 1, "unexpected end of header".into()));
            }
            if byte[0] == b'\n' {
                break;
            }
            header.push(byte[0] as char);
        }
        lineno += 1;
        if lineno == 1 {
            if header != MAGIC {
                return Err(parse_err(1, format!("bad magic line {:?}", header)));
            }
            continue;
        }
        if header == "end" {
            break;
        }
        let mut parts = header.splitn(2, ' ');
        let tag = parts.next().unwrap_or("");
        let rest = parts.next().unwrap_or("");
        match tag {
            "meta" => {
                let mut kv = rest.splitn(2, ' ');
                let k = kv
                    .next()
                    .filter(|k| !k.is_empty())
                    .ok_or_else(|| parse_err(lineno, "meta line without key".into()))?;
                let v = kv.next().unwrap_or("");
                store.set_meta(k, v);
            }
            "tensor" => {
                let toks: Vec<&str> = rest.split(' ').collect();
                if toks.len() < 4 {
                    return Err(parse_err(lineno, format!("short tensor line {:?}", header)));
                }
                let name = toks[0].to_string();
                if toks[1] != "f64" {
                    return Err(parse_err(
                        lineno,
                        format!("unsupported dtype {:?}", toks[1]),
                    ));
                }
                let ndim: usize = toks[2]
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad rank {:?}", toks[2])))?;
                if toks.len() != 4 + ndim {
                    return Err(parse_err(
                        lineno,
                        format!("tensor line wants {} dims, got {}", ndim, toks.len() - 4),
                    ));
                }
                let mut shape = Vec::with_capacity(ndim);
                for t in &toks[3..3 + ndim] {
                    shape.push(
                        t.parse::<usize>()
                            .map_err(|_| parse_err(lineno, format!("bad dim {:?}", t)))?,
                    );
                }
                let trainable = match toks[3 + ndim] {
                    "train" => true,
                    "stat" => false,
                    other => {
                        return Err(parse_err(lineno, format!("bad trainability tag {:?}", other)))
                    }
                };
                pending.push((name, shape, trainable));
            }
            other => {
                return Err(parse_err(lineno, format!("unknown header tag {:?}", other)));
            }
        }
    }

    for (name, shape, trainable) in pending {
        let numel: usize = shape.iter().product();
        let mut bytes = vec![0u8; numel * 8];
        r.read_exact(&mut bytes).map_err(|_| {
            Error::Schema(format!(
                "{}: payload ended inside tensor {:?}",
                path.display(),
                name
            ))
        })?;
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        store.insert(&name, Tensor::new(shape, data)?, trainable)?;
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Schema(format!(
            "{}: trailing bytes after payload",
            path.display()
        )));
    }
    Ok(store)
}

/// Hex SHA-256 of a file's contents.
pub fn file_sha256(path: &Path) -> Result<String> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{:02x}", b));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_store() -> ParamStore {
        let mut s = ParamStore::new();
        s.set_meta("stage", "1");
        s.set_meta("seed", "42");
        s.insert(
            "seg.w",
            Tensor::new(vec![2, 3], vec![1.5, -2.25, 0.0, -0.0, 1e-300, 3.125]).unwrap(),
            true,
        )
        .unwrap();
        s.insert(
            "seg.bn.running_mean",
            Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap(),
            false,
        )
        .unwrap();
        s
    }

    #[test]
    fn roundtrip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let store = sample_store();
        save_checkpoint(&store, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();

        assert_eq!(loaded.len(), store.len());
        assert_eq!(loaded.meta("stage"), Some("1"));
        assert_eq!(loaded.meta("seed"), Some("42"));
        let names: Vec<&str> = loaded.names().collect();
        assert_eq!(names, vec!["seg.w", "seg.bn.running_mean"]);
        assert_eq!(loaded.is_trainable("seg.w"), Some(true));
        assert_eq!(loaded.is_trainable("seg.bn.running_mean"), Some(false));
        for (name, tensor, _) in store.iter() {
            let got = loaded.get(name).unwrap();
            assert_eq!(got.shape(), tensor.shape());
            for (a, b) in got.data().iter().zip(tensor.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        // saving the loaded store reproduces identical bytes
        let path2 = dir.path().join("model2.ckpt");
        save_checkpoint(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn duplicate_and_bad_names_rejected() {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::scalar(1.0), true).unwrap();
        assert!(s.insert("a", Tensor::scalar(2.0), true).is_err());
        assert!(s.insert("has space", Tensor::scalar(1.0), true).is_err());
        assert!(s.insert("", Tensor::scalar(1.0), true).is_err());
    }

    #[test]
    fn bad_magic_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"not a checkpoint\nend\n").unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn truncated_payload_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&sample_store(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(
            load_checkpoint(&path).unwrap_err(),
            Error::Schema(_)
        ));
    }

    #[test]
    fn trailing_bytes_are_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&sample_store(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path).unwrap_err(),
            Error::Schema(_)
        ));
    }

    #[test]
    fn trainable_numel_counts_only_trainables() {
        let s = sample_store();
        assert_eq!(s.trainable_numel(), 6);
        assert_eq!(s.trainable_names(), vec!["seg.w".to_string()]);
    }

    #[test]
    fn sha256_matches_known_vector() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("abc.txt");
        std::fs::write(&path, b"abc").unwrap();
        assert_eq!(
            file_sha256(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
