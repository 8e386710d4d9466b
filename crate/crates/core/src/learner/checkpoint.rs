//! Binary checkpoints: an 8-byte little-endian header length, a JSON
//! header, then four little-endian sections of `param_count` values each:
//! student (`f32`), teacher accumulator (`f64`), Adam first and second
//! moments (`f32`).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Layout, ParamVector};
use super::optim::{AdamState, MeanTeacher};
use crate::error::{Error, Result};

const MAGIC: &str = "aio2-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    magic: String,
    version: u32,
    layout: Layout,
    epoch: usize,
    /// Optimizer steps taken; also the EMA iteration count.
    step: u64,
    adam_t: u64,
    param_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub step: u64,
    pub student: ParamVector,
    pub teacher: MeanTeacher,
    pub adam: AdamState,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let n = self.student.data.len();
        self.student.check_layout(self.teacher.params())?;
        if self.adam.m.len() != n || self.adam.v.len() != n {
            return Err(Error::shape(
                format!("{n} optimizer moments"),
                self.adam.m.len(),
            ));
        }
        let header = Header {
            magic: MAGIC.into(),
            version: 2,
            layout: self.student.layout.clone(),
            epoch: self.epoch,
            step: self.step,
            adam_t: self.adam.t,
            param_count: n,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(8 + json.len() + 20 * n);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let f32s = |out: &mut Vec<u8>, xs: &[f32]| {
            xs.iter()
                .for_each(|v| out.extend_from_slice(&v.to_le_bytes()))
        };
        f32s(&mut out, &self.student.data);
        for v in self.teacher.accumulator() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        f32s(&mut out, &self.adam.m);
        f32s(&mut out, &self.adam.v);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            what: "checkpoint",
            path: path.to_path_buf(),
            reason,
        };
        let mut cursor = bytes;
        let mut len = [0u8; 8];
        cursor
            .read_exact(&mut len)
            .map_err(|e| bad(e.to_string()))?;
        let len = u64::from_le_bytes(len) as usize;
        if cursor.len() < len {
            return Err(bad("truncated header".into()));
        }
        let header: Header =
            serde_json::from_slice(&cursor[..len]).map_err(|e| bad(e.to_string()))?;
        if header.magic != MAGIC {
            return Err(bad(format!("bad magic {:?}", header.magic)));
        }
        if header.version != 2 {
            return Err(bad(format!("unsupported version {}", header.version)));
        }
        if header.layout.param_count() != header.param_count {
            return Err(bad("layout does not match parameter count".into()));
        }
        let body = &cursor[len..];
        let n = header.param_count;
        if body.len() != 20 * n {
            return Err(bad(format!(
                "expected {} body bytes, found {}",
                20 * n,
                body.len()
            )));
        }
        let f32s = |from: usize| -> Vec<f32> {
            body[from..from + 4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect()
        };
        let acc: Vec<f64> = body[4 * n..12 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            epoch: header.epoch,
            step: header.step,
            student: ParamVector::new(header.layout.clone(), f32s(0))?,
            teacher: MeanTeacher::from_accumulator(header.layout, acc)?,
            adam: AdamState {
                m: f32s(12 * n),
                v: f32s(16 * n),
                t: header.adam_t,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::model::ModelConfig;

    #[test]
    fn bytes_round_trip_bit_exact() {
        let student = ModelConfig::default().init_params();
        let mut teacher = MeanTeacher::new(&student);
        teacher
            .update(
                &ModelConfig {
                    init_seed: 1,
                    ..ModelConfig::default()
                }
                .init_params(),
                0.999,
                1,
            )
            .unwrap();
        let n = student.data.len();
        let ck = Checkpoint {
            epoch: 45,
            step: 1234,
            student,
            teacher,
            adam: AdamState {
                m: (0..n).map(|i| i as f32 * 1e-3).collect(),
                v: vec![1e-9; n],
                t: 1234,
            },
        };
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap(), Path::new("mem")).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let student = ModelConfig::default().init_params();
        let n = student.data.len();
        let ck = Checkpoint {
            epoch: 0,
            step: 0,
            teacher: MeanTeacher::new(&student),
            student,
            adam: AdamState::new(n),
        };
        let mut bytes = ck.to_bytes().unwrap();
        bytes.truncate(bytes.len() - 1);
        assert!(Checkpoint::from_bytes(&bytes, Path::new("mem")).is_err());
    }
}
