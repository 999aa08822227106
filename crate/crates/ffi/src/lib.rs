//! C ABI over the newsgen library.
//!
//! Objects cross the boundary as opaque handles created by `*_load` and
//! released by the matching `*_free`. Every fallible call returns an
//! [`NgStatus`]; on failure [`ng_last_error`] describes the most recent error
//! on the calling thread. Strings and id buffers returned through out
//! parameters are owned by the caller and released with [`ng_string_free`] /
//! [`ng_ids_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use newsgen::corpus::{canonical_order, read_corpus, LoadMode};
use newsgen::evalsuite::{perplexity, recall_at_k, EvalError, MaskPolicy};
use newsgen::generate::{generate_field, top_p_filter, SamplerConfig};
use newsgen::lm::{load_checkpoint, Checkpoint, LmError, Model};
use newsgen::ner::{oracle_entities, GazetteerTagger};
use newsgen::serializer::{serialize, strip_annotations, AnnotatedDocument, AnnotationScope};
use newsgen::tokenizer::{decode, encode, Vocab};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Model = 5,
    VocabMismatch = 6,
    InvalidArgument = 7,
    Panic = 8,
}

/// Loaded tokenizer vocabulary.
pub struct NgVocab(Vocab);

/// Loaded checkpoint together with its model.
pub struct NgModel {
    checkpoint: Checkpoint,
    model: Model<f32>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(NgStatus, String);

impl Failure {
    fn arg(msg: impl Into<String>) -> Self {
        Failure(NgStatus::InvalidArgument, msg.into())
    }
}

impl From<LmError> for Failure {
    fn from(e: LmError) -> Self {
        let status = match &e {
            LmError::Io(_) => NgStatus::Io,
            LmError::VocabMismatch { .. } => NgStatus::VocabMismatch,
            LmError::Version { .. } | LmError::Integrity(_) => NgStatus::Parse,
            _ => NgStatus::Model,
        };
        Failure(status, e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let status = match &e {
            EvalError::VocabMismatch { .. } => NgStatus::VocabMismatch,
            EvalError::Lm(_) => NgStatus::Model,
            _ => NgStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NgStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NgStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(NgStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(NgStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(NgStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(NgStatus::NullPointer, format!("{name} is null")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(NgStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s).map(CString::into_raw).map_err(|_| Failure::arg("result contains a NUL byte"))
}

/// Message of the last failed call on this thread, or null. Owned by the
/// library; valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ng_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ng_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn ng_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `ids`/`len` must come from [`ng_encode`].
#[no_mangle]
pub unsafe extern "C" fn ng_ids_free(ids: *mut u32, len: usize) {
    if !ids.is_null() {
        drop(Vec::from_raw_parts(ids, len, len));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ng_vocab_load(path: *const c_char, out: *mut *mut NgVocab) -> NgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let v = Vocab::load(path).map_err(|e| Failure(NgStatus::Io, e.to_string()))?;
        *out = Box::into_raw(Box::new(NgVocab(v)));
        Ok(())
    })
}

/// # Safety
/// `v` must be null or a handle from [`ng_vocab_load`], freed at most once.
#[no_mangle]
pub unsafe extern "C" fn ng_vocab_free(v: *mut NgVocab) {
    if !v.is_null() {
        drop(Box::from_raw(v));
    }
}

/// Number of tokens, or 0 for a null handle.
///
/// # Safety
/// `v` must be null or a live vocabulary handle.
#[no_mangle]
pub unsafe extern "C" fn ng_vocab_size(v: *const NgVocab) -> usize {
    v.as_ref().map_or(0, |v| v.0.len())
}

/// # Safety
/// Pointers must be valid; `text` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ng_encode(
    v: *const NgVocab,
    text: *const c_char,
    out_ids: *mut *mut u32,
    out_len: *mut usize,
) -> NgStatus {
    guard(|| {
        let vocab = &ref_arg(v, "vocab")?.0;
        let text = str_arg(text, "text")?;
        let (out_ids, out_len) = (out_arg(out_ids, "out_ids")?, out_arg(out_len, "out_len")?);
        let ids = encode(text, vocab).ids.into_boxed_slice();
        *out_len = ids.len();
        *out_ids = Box::into_raw(ids).cast();
        Ok(())
    })
}

/// # Safety
/// `ids` must point at `len` ids; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ng_decode(v: *const NgVocab, ids: *const u32, len: usize, out: *mut *mut c_char) -> NgStatus {
    guard(|| {
        let vocab = &ref_arg(v, "vocab")?.0;
        let ids = slice_arg(ids, len, "ids")?;
        let out = out_arg(out, "out")?;
        let text = decode(ids, vocab).map_err(|e| Failure::arg(e.to_string()))?;
        *out = into_c_string(text)?;
        Ok(())
    })
}

/// Loads a checkpoint, refusing one trained with a different vocabulary.
///
/// # Safety
/// `path` NUL-terminated, `v` a live handle, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ng_model_load(path: *const c_char, v: *const NgVocab, out: *mut *mut NgModel) -> NgStatus {
    guard(|| {
        let vocab = &ref_arg(v, "vocab")?.0;
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let checkpoint = load_checkpoint(path, &vocab.hash())?;
        let model = checkpoint.model()?;
        *out = Box::into_raw(Box::new(NgModel { checkpoint, model }));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from [`ng_model_load`], freed at most once.
#[no_mangle]
pub unsafe extern "C" fn ng_model_free(m: *mut NgModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Body perplexity over prepared documents given as JSON lines.
///
/// # Safety
/// Pointers must be valid; `docs_jsonl` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ng_perplexity(
    m: *const NgModel,
    v: *const NgVocab,
    docs_jsonl: *const c_char,
    out_ppl: *mut f64,
) -> NgStatus {
    guard(|| {
        let model = ref_arg(m, "model")?;
        let vocab = &ref_arg(v, "vocab")?.0;
        let text = str_arg(docs_jsonl, "docs_jsonl")?;
        let out = out_arg(out_ppl, "out_ppl")?;
        let docs = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str::<AnnotatedDocument>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Failure(NgStatus::Parse, e.to_string()))?;
        *out = perplexity(&model.checkpoint, vocab, &docs, MaskPolicy::Body)?.ppl;
        Ok(())
    })
}

/// Samples a body continuation of `context` (a serialized prefix ending in
/// `<start-body>`) with nucleus sampling.
///
/// # Safety
/// Pointers must be valid; `context` NUL-terminated.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ng_generate(
    m: *const NgModel,
    v: *const NgVocab,
    context: *const c_char,
    p: f64,
    temperature: f64,
    max_new_tokens: usize,
    seed: u64,
    strip_categories: bool,
    out: *mut *mut c_char,
) -> NgStatus {
    guard(|| {
        let model = ref_arg(m, "model")?;
        let vocab = &ref_arg(v, "vocab")?.0;
        let context = str_arg(context, "context")?;
        let out = out_arg(out, "out")?;
        let cfg = SamplerConfig { p, temperature, max_new_tokens, seed };
        let g = generate_field(&model.model, vocab, context, &cfg).map_err(|e| Failure(NgStatus::Model, e.to_string()))?;
        *out = into_c_string(if strip_categories { g.stripped } else { g.text })?;
        Ok(())
    })
}

/// Writes the renormalized nucleus of `probs` into `out` (both of length `n`).
///
/// # Safety
/// `probs` and `out` must point at `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ng_top_p_filter(probs: *const f64, n: usize, p: f64, out: *mut f64) -> NgStatus {
    guard(|| {
        let probs = slice_arg(probs, n, "probs")?;
        if out.is_null() {
            return Err(Failure(NgStatus::NullPointer, "out is null".into()));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Failure::arg(format!("p must be in (0, 1], got {p}")));
        }
        let filtered = top_p_filter(probs, p);
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&filtered);
        Ok(())
    })
}

/// Recall@K for a row-major `n_queries × n_targets` similarity matrix whose
/// correct target for query `i` is target `i`. `out` receives one value per k.
///
/// # Safety
/// `sim` must hold `n_queries * n_targets` floats, `ks` and `out` `n_ks` entries.
#[no_mangle]
pub unsafe extern "C" fn ng_recall_at_k(
    sim: *const f32,
    n_queries: usize,
    n_targets: usize,
    ks: *const usize,
    n_ks: usize,
    out: *mut f64,
) -> NgStatus {
    guard(|| {
        let flat = slice_arg(sim, n_queries * n_targets, "sim")?;
        let ks = slice_arg(ks, n_ks, "ks")?;
        if out.is_null() && n_ks > 0 {
            return Err(Failure(NgStatus::NullPointer, "out is null".into()));
        }
        let rows: Vec<Vec<f32>> = flat.chunks(n_targets.max(1)).map(<[f32]>::to_vec).collect();
        let table = recall_at_k(&rows, ks)?;
        for (i, k) in ks.iter().enumerate() {
            *out.add(i) = table[k];
        }
        Ok(())
    })
}

/// Serializes one JSON article in the given field order (preset name or
/// comma list). Entities and mentions come from the article's supplied
/// annotations; `annotate` adds category tokens to narrative fields.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ng_serialize(
    article_json: *const c_char,
    order: *const c_char,
    annotate: bool,
    out: *mut *mut c_char,
) -> NgStatus {
    guard(|| {
        let text = str_arg(article_json, "article_json")?;
        let order = canonical_order(str_arg(order, "order")?).map_err(|e| Failure::arg(e.to_string()))?;
        let out = out_arg(out, "out")?;
        let mut loaded =
            read_corpus(text.as_bytes(), LoadMode::Strict).map_err(|e| Failure(NgStatus::Parse, e.to_string()))?;
        if loaded.articles.len() != 1 {
            return Err(Failure::arg(format!("expected one article, got {}", loaded.articles.len())));
        }
        let article = loaded.articles.remove(0);
        let tagger = GazetteerTagger::new(Vec::<(String, _)>::new());
        let entities = oracle_entities(&article, &tagger);
        let (scope, spans) = if annotate {
            (AnnotationScope::narrative(), newsgen::ner::article_spans(&article, &tagger))
        } else {
            (AnnotationScope::none(), Vec::new())
        };
        let doc = serialize(&article, &order, &entities, &spans, &scope).map_err(|e| Failure::arg(e.to_string()))?;
        *out = into_c_string(doc.serialized)?;
        Ok(())
    })
}

/// # Safety
/// `text` NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ng_strip_annotations(text: *const c_char, out: *mut *mut c_char) -> NgStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        *out = into_c_string(strip_annotations(text))?;
        Ok(())
    })
}
