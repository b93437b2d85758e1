//! Versioned single-file model format.
//!
//! Little-endian throughout. Layout:
//!
//! ```text
//! magic "UISVDPP\0" | version u32 | variant u8 | age_encoding u8 | attr_norm u8 | 0u8
//! k m n |F_a| |F_t| : u32 x5 | alpha beta gamma lambda : f64 x4 | epochs u32 | seed u64
//! dataset name : str
//! mu f64 | b_user [m] | b_item [n] | P [m*k] | Q [n*k] | Y_impl [n*k] | Y_age [|F_a|*k] | Y_genre [|F_t|*k]
//! genre names : str x |F_t|
//! user map (external u32, dense u32) x m | item map (external u32, dense u32) x n
//! user ages u32 x m
//! item genres (count u32, index u32 x count) x n
//! implicit sets (count u32, item u32 x count) x m
//! "END\0"
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8 bytes. Reals are stored as
//! their IEEE-754 bits, so a round trip is bit-exact.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use super::{Factors, HyperParams, Model, ModelContext, ModelParams, Variant};
use crate::dataio::IdIndex;
use crate::features::{AgeEncoding, AttrNorm, AttributeTable, GenreVocabulary, AGE_BUCKETS};

pub const MAGIC: [u8; 8] = *b"UISVDPP\0";
pub const FORMAT_VERSION: u32 = 1;
const END: [u8; 4] = *b"END\0";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {found} (expected {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("model file truncated at byte {0}")]
    Truncated(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("refusing to save non-finite parameters")]
    NonFinite,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn save_model(model: &Model, path: &Path) -> Result<(), FormatError> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model, FormatError> {
    read_model(&fs::read(path)?)
}

struct Writer<'a, W: Write> {
    out: &'a mut W,
}

impl<W: Write> Writer<'_, W> {
    fn bytes(&mut self, b: &[u8]) -> io::Result<()> {
        self.out.write_all(b)
    }
    fn u8(&mut self, v: u8) -> io::Result<()> {
        self.bytes(&[v])
    }
    fn u32(&mut self, v: u32) -> io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> io::Result<()> {
        self.bytes(&v.to_bits().to_le_bytes())
    }
    fn reals(&mut self, v: &[f64]) -> io::Result<()> {
        v.iter().try_for_each(|&x| self.f64(x))
    }
    fn len(&mut self, n: usize) -> io::Result<()> {
        self.u32(u32::try_from(n).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "length overflows u32"))?)
    }
    fn str(&mut self, s: &str) -> io::Result<()> {
        self.len(s.len())?;
        self.bytes(s.as_bytes())
    }
    fn list(&mut self, v: impl ExactSizeIterator<Item = u32>) -> io::Result<()> {
        self.len(v.len())?;
        v.into_iter().try_for_each(|x| self.u32(x))
    }
}

pub fn write_model<W: Write>(model: &Model, out: &mut W) -> Result<(), FormatError> {
    let p = &model.params;
    if !p.all_finite() {
        return Err(FormatError::NonFinite);
    }
    let hp = &model.hp;
    let mut w = Writer { out };
    w.bytes(&MAGIC)?;
    w.u32(FORMAT_VERSION)?;
    w.u8(hp.variant.code())?;
    w.u8(match hp.age_encoding {
        AgeEncoding::OneHot => 0,
        AgeEncoding::Cumulative => 1,
    })?;
    w.u8(match hp.attr_norm {
        AttrNorm::Active => 0,
        AttrNorm::Global => 1,
    })?;
    w.u8(0)?;
    for dim in [p.k(), p.p.rows(), p.q.rows(), p.y_age.rows(), p.y_genre.rows()] {
        w.len(dim)?;
    }
    w.reals(&[hp.alpha, hp.beta, hp.gamma, hp.lambda])?;
    w.len(hp.epochs)?;
    w.u64(hp.seed)?;
    w.str(&model.dataset)?;

    w.f64(p.mu)?;
    w.reals(&p.b_user)?;
    w.reals(&p.b_item)?;
    for block in [&p.p, &p.q, &p.y_impl, &p.y_age, &p.y_genre] {
        w.reals(block.as_slice())?;
    }
    for name in model.genres.names() {
        w.str(name)?;
    }
    for index in [&model.user_index, &model.item_index] {
        for (dense, &ext) in index.externals().iter().enumerate() {
            w.u32(ext)?;
            w.u32(dense as u32)?;
        }
    }
    for &age in &model.user_ages {
        w.u32(age)?;
    }
    for genres in &model.ctx.attrs.item_genres {
        w.list(genres.iter().map(|&g| g as u32))?;
    }
    for items in &model.ctx.implicit {
        w.list(items.iter().copied())?;
    }
    w.bytes(&END)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(FormatError::Truncated(self.buf.len())),
        }
    }
    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn reals(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        // Bound the allocation by what the file can actually hold.
        if n.saturating_mul(8) > self.buf.len() - self.pos {
            return Err(FormatError::Truncated(self.buf.len()));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn str(&mut self) -> Result<String, FormatError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| FormatError::Corrupt("string is not UTF-8".into()))
    }
    fn list(&mut self, bound: usize, what: &str) -> Result<Vec<u32>, FormatError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(4) > self.buf.len() - self.pos {
            return Err(FormatError::Truncated(self.buf.len()));
        }
        let v = (0..n).map(|_| self.u32()).collect::<Result<Vec<_>, _>>()?;
        if let Some(bad) = v.iter().find(|&&x| x as usize >= bound) {
            return Err(FormatError::DimensionMismatch(format!("{what} index {bad} >= {bound}")));
        }
        Ok(v)
    }
    fn factors(&mut self, rows: usize, k: usize) -> Result<Factors, FormatError> {
        let len = rows
            .checked_mul(k)
            .ok_or_else(|| FormatError::DimensionMismatch(format!("{rows}x{k} overflows")))?;
        Ok(Factors::from_vec(rows, k, self.reals(len)?))
    }
    fn index(&mut self, n: usize, what: &str) -> Result<IdIndex, FormatError> {
        let mut ids = Vec::with_capacity(n.min(self.buf.len()));
        for expected in 0..n {
            let ext = self.u32()?;
            let dense = self.u32()?;
            if dense as usize != expected {
                return Err(FormatError::Corrupt(format!("{what} map out of order at {expected}")));
            }
            ids.push(ext);
        }
        let index = IdIndex::from_sorted(ids);
        if index.externals().iter().enumerate().any(|(d, &e)| index.dense(e) != Some(d as u32)) {
            return Err(FormatError::Corrupt(format!("duplicate external id in {what} map")));
        }
        Ok(index)
    }
}

pub fn read_model(buf: &[u8]) -> Result<Model, FormatError> {
    let mut r = Reader { buf, pos: 0 };
    if buf.len() < MAGIC.len() || r.take(MAGIC.len())? != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion { found: version });
    }
    let variant = r.u8()?;
    let variant = Variant::from_code(variant).ok_or_else(|| FormatError::Corrupt(format!("variant code {variant}")))?;
    let age_encoding = match r.u8()? {
        0 => AgeEncoding::OneHot,
        1 => AgeEncoding::Cumulative,
        c => return Err(FormatError::Corrupt(format!("age encoding code {c}"))),
    };
    let attr_norm = match r.u8()? {
        0 => AttrNorm::Active,
        1 => AttrNorm::Global,
        c => return Err(FormatError::Corrupt(format!("attribute norm code {c}"))),
    };
    r.u8()?;
    let k = r.u32()? as usize;
    let m = r.u32()? as usize;
    let n = r.u32()? as usize;
    let fa = r.u32()? as usize;
    let ft = r.u32()? as usize;
    if k == 0 {
        return Err(FormatError::DimensionMismatch("k = 0".into()));
    }
    if fa != AGE_BUCKETS {
        return Err(FormatError::DimensionMismatch(format!("|F_a| = {fa}, expected {AGE_BUCKETS}")));
    }
    let (alpha, beta, gamma, lambda) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let epochs = r.u32()? as usize;
    let seed = r.u64()?;
    let dataset = r.str()?;

    let mu = r.f64()?;
    let b_user = r.reals(m)?;
    let b_item = r.reals(n)?;
    let params = ModelParams {
        mu,
        b_user,
        b_item,
        p: r.factors(m, k)?,
        q: r.factors(n, k)?,
        y_impl: r.factors(n, k)?,
        y_age: r.factors(fa, k)?,
        y_genre: r.factors(ft, k)?,
    };
    let genres = GenreVocabulary::new((0..ft).map(|_| r.str()).collect::<Result<_, _>>()?);
    let user_index = r.index(m, "user")?;
    let item_index = r.index(n, "item")?;
    let user_ages: Vec<u32> = (0..m).map(|_| r.u32()).collect::<Result<_, _>>()?;
    let item_genres: Vec<Vec<usize>> = (0..n)
        .map(|_| r.list(ft, "genre").map(|v| v.into_iter().map(|g| g as usize).collect()))
        .collect::<Result<_, _>>()?;
    let implicit: Vec<Vec<u32>> = (0..m).map(|_| r.list(n, "item")).collect::<Result<_, _>>()?;
    if r.take(END.len())? != END {
        return Err(FormatError::Corrupt("missing end marker".into()));
    }
    if r.pos != buf.len() {
        return Err(FormatError::Corrupt(format!("{} trailing bytes", buf.len() - r.pos)));
    }

    let hp = HyperParams {
        k,
        gamma,
        lambda,
        alpha,
        beta,
        epochs,
        seed,
        variant,
        age_encoding,
        attr_norm,
    };
    let user_age = user_ages
        .iter()
        .map(|&age| crate::features::active_age_attributes(age, age_encoding))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| FormatError::Corrupt(e.to_string()))?;
    Ok(Model {
        dataset,
        hp,
        params,
        ctx: ModelContext {
            attrs: AttributeTable {
                user_age,
                item_genres,
                num_genres: ft,
            },
            implicit,
        },
        genres,
        user_index,
        item_index,
        user_ages,
    })
}
