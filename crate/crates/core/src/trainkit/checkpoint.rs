//! Versioned plain-text checkpoint files.
//!
//! ```text
//! ablate-checkpoint 1
//! scalar f64
//! kind regressor            (or: fusion)
//! epoch 40
//! val_loss 0.1123
//! config epochs=100 lr=0.001 momentum=0.9 validate_every=10 batch_size=32 seed=7
//! regressor main 64         (fusion: blocks `face`, `bg`, `fusion`)
//! bias <5 values>
//! w <5 values>              (one line per feature)
//! fingerprint <sha256 of all parameter bytes>
//! ```
//!
//! Numbers use the shortest round-trip decimal form, so equal parameters
//! always produce identical bytes.

use std::str::FromStr;

use super::model::{hex_digest, FusionModel, Regressor, NUM_TRAITS};
use super::train::{Checkpoint, TrainConfig};
use super::{Result, TrainError};
use crate::Scalar;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "ablate-checkpoint";

/// Models that can be stored in a checkpoint file.
pub trait CheckpointFile<T: Scalar>: Sized {
    const KIND: &'static str;

    fn write_blocks(&self, out: &mut String);
    fn read_blocks(lines: &mut Lines<'_>) -> Result<Self>;
    fn param_bytes(&self) -> Vec<u8>;
}

pub struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn next_fields(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let (n, line) = self
            .inner
            .next()
            .ok_or_else(|| malformed(format!("unexpected end of file, expected `{key}`")))?;
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some(k) if k == key => Ok(fields.collect()),
            other => Err(malformed(format!("line {}: expected `{key}`, found {other:?}", n + 1))),
        }
    }

    fn single(&mut self, key: &str) -> Result<&'a str> {
        match self.next_fields(key)?.as_slice() {
            [v] => Ok(v),
            _ => Err(malformed(format!("`{key}` takes one value"))),
        }
    }
}

fn malformed(msg: impl Into<String>) -> TrainError {
    TrainError::MalformedCheckpoint(msg.into())
}

fn parse<V: FromStr>(s: &str) -> Result<V> {
    s.parse().map_err(|_| malformed(format!("cannot parse `{s}`")))
}

fn join<T: Scalar>(values: &[T]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn write_regressor<T: Scalar>(out: &mut String, name: &str, r: &Regressor<T>) {
    out.push_str(&format!("regressor {name} {}\n", r.feature_dim()));
    out.push_str(&format!("bias {}\n", join(&r.bias())));
    for row in r.weights().chunks(NUM_TRAITS) {
        out.push_str(&format!("w {}\n", join(row)));
    }
}

fn read_regressor<T: Scalar>(lines: &mut Lines<'_>, name: &str) -> Result<Regressor<T>> {
    let header = lines.next_fields("regressor")?;
    let [got_name, dim] = header.as_slice() else {
        return Err(malformed("regressor header needs a name and a dimension"));
    };
    if *got_name != name {
        return Err(malformed(format!("expected regressor `{name}`, found `{got_name}`")));
    }
    let dim: usize = parse(dim)?;
    let row = |fields: Vec<&str>| -> Result<[T; NUM_TRAITS]> {
        let vals = fields.iter().map(|s| parse::<T>(s)).collect::<Result<Vec<T>>>()?;
        vals.try_into().map_err(|_| malformed("rows need five values"))
    };
    let bias = row(lines.next_fields("bias")?)?;
    let mut weights = Vec::with_capacity(dim * NUM_TRAITS);
    for _ in 0..dim {
        weights.extend(row(lines.next_fields("w")?)?);
    }
    Regressor::from_parts(dim, weights, bias)
}

impl<T: Scalar> CheckpointFile<T> for Regressor<T> {
    const KIND: &'static str = "regressor";

    fn write_blocks(&self, out: &mut String) {
        write_regressor(out, "main", self);
    }

    fn read_blocks(lines: &mut Lines<'_>) -> Result<Self> {
        read_regressor(lines, "main")
    }

    fn param_bytes(&self) -> Vec<u8> {
        self.to_bytes()
    }
}

impl<T: Scalar> CheckpointFile<T> for FusionModel<T> {
    const KIND: &'static str = "fusion";

    fn write_blocks(&self, out: &mut String) {
        write_regressor(out, "face", &self.face_branch);
        write_regressor(out, "bg", &self.bg_branch);
        write_regressor(out, "fusion", &self.fusion);
    }

    fn read_blocks(lines: &mut Lines<'_>) -> Result<Self> {
        let face_branch = read_regressor(lines, "face")?;
        let bg_branch = read_regressor(lines, "bg")?;
        let fusion = read_regressor(lines, "fusion")?;
        if fusion.feature_dim() != 2 * NUM_TRAITS {
            return Err(malformed("fusion layer must take 10 inputs"));
        }
        Ok(Self {
            face_branch,
            bg_branch,
            fusion,
        })
    }

    fn param_bytes(&self) -> Vec<u8> {
        let mut b = self.branch_bytes();
        b.extend(self.fusion.to_bytes());
        b
    }
}

impl<T: Scalar, M: CheckpointFile<T>> Checkpoint<T, M> {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = format!("{MAGIC} {FORMAT_VERSION}\nscalar {}\nkind {}\n", T::NAME, M::KIND);
        out.push_str(&format!("epoch {}\nval_loss {}\n", self.epoch, self.val_loss));
        out.push_str(&format!(
            "config epochs={} lr={} momentum={} validate_every={} batch_size={} seed={}\n",
            c.epochs, c.lr, c.momentum, c.validate_every, c.batch_size, c.seed
        ));
        self.params.write_blocks(&mut out);
        out.push_str(&format!("fingerprint {}\n", hex_digest(&self.params.param_bytes())));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = Lines {
            inner: text.lines().enumerate().peekable(),
        };
        let version: u32 = parse(lines.single(MAGIC)?)?;
        if version != FORMAT_VERSION {
            return Err(malformed(format!("unsupported format version {version}")));
        }
        let scalar = lines.single("scalar")?;
        if scalar != T::NAME {
            return Err(malformed(format!("checkpoint holds {scalar}, expected {}", T::NAME)));
        }
        let kind = lines.single("kind")?;
        if kind != M::KIND {
            return Err(malformed(format!("checkpoint kind `{kind}`, expected `{}`", M::KIND)));
        }
        let epoch = parse(lines.single("epoch")?)?;
        let val_loss = parse(lines.single("val_loss")?)?;
        let mut config = TrainConfig::<T>::default();
        for kv in lines.next_fields("config")? {
            let (k, v) = kv.split_once('=').ok_or_else(|| malformed(format!("bad config entry `{kv}`")))?;
            match k {
                "epochs" => config.epochs = parse(v)?,
                "lr" => config.lr = parse(v)?,
                "momentum" => config.momentum = parse(v)?,
                "validate_every" => config.validate_every = parse(v)?,
                "batch_size" => config.batch_size = parse(v)?,
                "seed" => config.seed = parse(v)?,
                other => return Err(malformed(format!("unknown config key `{other}`"))),
            }
        }
        let params = M::read_blocks(&mut lines)?;
        let fingerprint = lines.single("fingerprint")?;
        if fingerprint != hex_digest(&params.param_bytes()) {
            return Err(malformed("fingerprint does not match parameters"));
        }
        Ok(Self {
            epoch,
            val_loss,
            config,
            params,
        })
    }
}
