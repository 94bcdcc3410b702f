//! C ABI over the `emolabel` library.
//!
//! Conventions:
//!
//! * Every fallible function returns an [`EmoStatus`]; results are written
//!   through out-pointers only on success.
//! * On failure a message is stored per thread; fetch it with
//!   [`emo_last_error_message`] and release it with [`emo_string_free`].
//! * Matrices are dense row-major `double`/`uint8_t` buffers of `n * c`
//!   entries. Output buffers are caller-allocated and their length is passed
//!   explicitly.
//! * Handles ([`EmoCorpus`], [`EmoPenalty`]) are opaque and must be released
//!   with their `_free` function. Passing NULL to a `_free` function is a
//!   no-op.
//! * Panics never cross the boundary; they surface as
//!   [`EmoStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use emolabel::aggregation::{loss_report, utterance_outcome, Rule};
use emolabel::cooccurrence::{penalty_pipeline, row_sum_weights, PenaltyMatrix};
use emolabel::corpus::{load_annotations, AnnotationSchema, Corpus, EmotionClassSet, VoteCount};
use emolabel::encoding::{alpha_soft, fraction_distribution, multi_hot, smooth, LabelKind, LabelVector};
use emolabel::losses::{LossKind, Objective};
use emolabel::metrics::{binarize, f1_scores, multilabel_metrics};
use emolabel::Error;
use ndarray::{ArrayView2, ArrayViewMut2};

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmoStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Shapes, ranges or enum values are inconsistent.
    InvalidArgument = 3,
    /// The input data violates the data model (classes, ratings, votes).
    InvalidInput = 4,
    /// A file could not be read or parsed.
    Io = 5,
    /// Training produced a non-finite loss.
    Diverged = 6,
    /// An internal panic was caught.
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmoRule {
    Majority = 0,
    Plurality = 1,
    AllInclusive = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmoLabelKind {
    Hard = 0,
    Fraction = 1,
    AlphaSoft = 2,
    MultiHot = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmoLossKind {
    CrossEntropy = 0,
    BinaryCrossEntropy = 1,
    KlDivergence = 2,
}

/// Opaque annotated corpus.
pub struct EmoCorpus {
    inner: Corpus,
}

/// Opaque penalization matrix.
pub struct EmoPenalty {
    inner: PenaltyMatrix,
}

impl From<EmoRule> for Rule {
    fn from(r: EmoRule) -> Self {
        match r {
            EmoRule::Majority => Rule::Mr,
            EmoRule::Plurality => Rule::Pr,
            EmoRule::AllInclusive => Rule::Ar,
        }
    }
}

impl From<EmoLossKind> for LossKind {
    fn from(k: EmoLossKind) -> Self {
        match k {
            EmoLossKind::CrossEntropy => LossKind::Ce,
            EmoLossKind::BinaryCrossEntropy => LossKind::Bce,
            EmoLossKind::KlDivergence => LossKind::Kld,
        }
    }
}

impl From<EmoLabelKind> for LabelKind {
    fn from(k: EmoLabelKind) -> Self {
        match k {
            EmoLabelKind::Hard => LabelKind::Hard,
            EmoLabelKind::Fraction => LabelKind::Fraction,
            EmoLabelKind::AlphaSoft => LabelKind::AlphaSoft,
            EmoLabelKind::MultiHot => LabelKind::MultiHot,
        }
    }
}

enum Failure {
    Null(&'static str),
    Utf8(&'static str),
    Argument(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type FfiResult = Result<(), Failure>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> EmoStatus {
    match e {
        Error::Io { .. } | Error::Csv(_) | Error::Json(_) | Error::Ingest { .. } => EmoStatus::Io,
        Error::Diverged { .. } => EmoStatus::Diverged,
        Error::Shape { .. } | Error::InvalidArgument(_) | Error::NonFinite(_) | Error::ReplayMismatch(_) => {
            EmoStatus::InvalidArgument
        }
        _ => EmoStatus::InvalidInput,
    }
}

fn guard<F: FnOnce() -> FfiResult>(f: F) -> EmoStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return EmoStatus::Ok,
        Ok(Err(Failure::Null(name))) => (EmoStatus::NullPointer, format!("`{name}` is NULL")),
        Ok(Err(Failure::Utf8(name))) => (EmoStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")),
        Ok(Err(Failure::Argument(m))) => (EmoStatus::InvalidArgument, m),
        Ok(Err(Failure::Core(e))) => (status_of(&e), e.to_string()),
        Err(payload) => {
            let m = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            (EmoStatus::Panic, format!("internal panic: {m}"))
        }
    };
    set_last_error(msg);
    status
}

unsafe fn str_arg<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8(name))
}

/// A NULL pointer is accepted only for an empty slice.
unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, name: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write_out<T>(p: *mut T, value: T, name: &'static str) -> FfiResult {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    p.write(value);
    Ok(())
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

fn matrix_len(n: usize, c: usize) -> Result<usize, Failure> {
    n.checked_mul(c)
        .ok_or_else(|| Failure::Argument(format!("{n} x {c} overflows")))
}

unsafe fn matrix_arg<'a, T>(p: *const T, n: usize, c: usize, name: &'static str) -> Result<ArrayView2<'a, T>, Failure> {
    let data = slice_arg(p, matrix_len(n, c)?, name)?;
    Ok(ArrayView2::from_shape((n, c), data).expect("length checked"))
}

unsafe fn matrix_out<'a, T>(p: *mut T, n: usize, c: usize, name: &'static str) -> Result<ArrayViewMut2<'a, T>, Failure> {
    let data = slice_out(p, matrix_len(n, c)?, name)?;
    Ok(ArrayViewMut2::from_shape((n, c), data).expect("length checked"))
}

fn expect_len(name: &str, got: usize, want: usize) -> FfiResult {
    if got == want {
        Ok(())
    } else {
        Err(Failure::Argument(format!("`{name}` holds {got} entries, {want} required")))
    }
}

/// Library version as a static NUL-terminated string. Do not free.
#[no_mangle]
pub extern "C" fn emo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL if the last call
/// succeeded. The caller owns the string and frees it with
/// [`emo_string_free`].
#[no_mangle]
pub extern "C" fn emo_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null_mut(), |s| s.clone().into_raw()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn emo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads an annotation CSV (`utterance_id,rater_id,class[,session,speaker]`)
/// with the comma-separated class set `classes`.
///
/// # Safety
/// `path` and `classes` must be NUL-terminated strings; `out` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn emo_corpus_load(path: *const c_char, classes: *const c_char, out: *mut *mut EmoCorpus) -> EmoStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let cs = EmotionClassSet::parse(str_arg(classes, "classes")?)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let corpus = load_annotations(path, &cs, &AnnotationSchema::default())?;
        write_out(out, Box::into_raw(Box::new(EmoCorpus { inner: corpus })), "out")
    })
}

/// # Safety
/// `corpus` must be NULL or a handle from [`emo_corpus_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn emo_corpus_free(corpus: *mut EmoCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Number of utterances and classes.
///
/// # Safety
/// `corpus` must be a live handle; out-pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn emo_corpus_shape(corpus: *const EmoCorpus, out_utterances: *mut usize, out_classes: *mut usize) -> EmoStatus {
    guard(|| {
        let c = &ref_arg(corpus, "corpus")?.inner;
        write_out(out_utterances, c.len(), "out_utterances")?;
        write_out(out_classes, c.num_classes(), "out_classes")
    })
}

/// In-set vote counts, one row per utterance in id order.
///
/// # Safety
/// `out` must hold `len` writable entries; `len` must equal utterances x classes.
#[no_mangle]
pub unsafe extern "C" fn emo_corpus_vote_counts(corpus: *const EmoCorpus, out: *mut u32, len: usize) -> EmoStatus {
    guard(|| {
        let c = &ref_arg(corpus, "corpus")?.inner;
        expect_len("out", len, matrix_len(c.len(), c.num_classes())?)?;
        let out = slice_out(out, len, "out")?;
        for (row, vc) in out.chunks_mut(c.num_classes().max(1)).zip(c.vote_counts()) {
            row.copy_from_slice(&vc.counts);
        }
        Ok(())
    })
}

/// Share of utterances and of ratings a rule discards.
///
/// # Safety
/// `corpus` must be a live handle; out-pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn emo_corpus_loss_report(
    corpus: *const EmoCorpus,
    rule: EmoRule,
    out_data_loss: *mut f64,
    out_rating_loss: *mut f64,
) -> EmoStatus {
    guard(|| {
        let r = loss_report(&ref_arg(corpus, "corpus")?.inner, rule.into());
        write_out(out_data_loss, r.data_loss, "out_data_loss")?;
        write_out(out_rating_loss, r.rating_loss, "out_rating_loss")
    })
}

/// Consensus for one vote-count vector. `out_class` receives the class
/// index, or -1 when the rule assigns none; `out_kept` whether the
/// utterance survives the rule. `key` seeds the all-inclusive tie break
/// together with `seed` and is usually the utterance id.
///
/// # Safety
/// `counts` must hold `num_classes` entries; `key` must be a NUL-terminated
/// string; out-pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn emo_aggregate(
    counts: *const u32,
    num_classes: usize,
    rule: EmoRule,
    seed: u64,
    key: *const c_char,
    out_class: *mut i64,
    out_kept: *mut bool,
) -> EmoStatus {
    guard(|| {
        let vc = VoteCount::from_counts(slice_arg(counts, num_classes, "counts")?.to_vec());
        let key = str_arg(key, "key")?;
        let o = utterance_outcome(&vc, rule.into(), seed, key);
        write_out(out_class, o.class_index.map_or(-1, |c| c as i64), "out_class")?;
        write_out(out_kept, o.kept, "out_kept")
    })
}

/// Soft encodings of one vote-count vector: fraction, alpha-soft (with
/// `alpha`) or multi-hot. Hard labels come from [`emo_aggregate`].
///
/// # Safety
/// `counts` and `out` must each hold `num_classes` entries.
#[no_mangle]
pub unsafe extern "C" fn emo_encode(
    counts: *const u32,
    num_classes: usize,
    kind: EmoLabelKind,
    alpha: f64,
    out: *mut f64,
) -> EmoStatus {
    guard(|| {
        let vc = VoteCount::from_counts(slice_arg(counts, num_classes, "counts")?.to_vec());
        let v = match kind {
            EmoLabelKind::Fraction => fraction_distribution(&vc)?,
            EmoLabelKind::AlphaSoft => alpha_soft(&vc, alpha)?,
            EmoLabelKind::MultiHot => multi_hot(&vc)?,
            EmoLabelKind::Hard => return Err(Failure::Argument("hard labels come from emo_aggregate".into())),
        };
        slice_out(out, num_classes, "out")?.copy_from_slice(&v.values);
        Ok(())
    })
}

/// `(1 - eps) * y + eps / C` for a distribution `values` of kind `kind`.
///
/// # Safety
/// `values` and `out` must each hold `num_classes` entries.
#[no_mangle]
pub unsafe extern "C" fn emo_smooth(values: *const f64, num_classes: usize, kind: EmoLabelKind, eps: f64, out: *mut f64) -> EmoStatus {
    guard(|| {
        let v = LabelVector {
            values: slice_arg(values, num_classes, "values")?.to_vec(),
            kind: kind.into(),
            smoothing: None,
        };
        let s = smooth(&v, eps)?;
        slice_out(out, num_classes, "out")?.copy_from_slice(&s.values);
        Ok(())
    })
}

/// Penalization matrix of a corpus.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn emo_penalty_from_corpus(corpus: *const EmoCorpus, out: *mut *mut EmoPenalty) -> EmoStatus {
    guard(|| {
        let c = &ref_arg(corpus, "corpus")?.inner;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let (_, _, p) = penalty_pipeline(c)?;
        write_out(out, Box::into_raw(Box::new(EmoPenalty { inner: p })), "out")
    })
}

/// Penalization matrix from explicit row-major values.
///
/// # Safety
/// `values` must hold `num_classes * num_classes` entries; `out` must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn emo_penalty_from_values(values: *const f64, num_classes: usize, out: *mut *mut EmoPenalty) -> EmoStatus {
    guard(|| {
        let m = matrix_arg(values, num_classes, num_classes, "values")?.to_owned();
        let classes = (0..num_classes).map(|i| format!("c{i}")).collect();
        let p = PenaltyMatrix::from_array(classes, m)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        write_out(out, Box::into_raw(Box::new(EmoPenalty { inner: p })), "out")
    })
}

/// # Safety
/// `penalty` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn emo_penalty_free(penalty: *mut EmoPenalty) {
    if !penalty.is_null() {
        drop(Box::from_raw(penalty));
    }
}

/// # Safety
/// `penalty` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn emo_penalty_num_classes(penalty: *const EmoPenalty, out: *mut usize) -> EmoStatus {
    guard(|| write_out(out, ref_arg(penalty, "penalty")?.inner.num_classes(), "out"))
}

/// Row-major matrix values; `len` must equal the squared class count.
///
/// # Safety
/// `penalty` must be a live handle; `out` must hold `len` entries.
#[no_mangle]
pub unsafe extern "C" fn emo_penalty_values(penalty: *const EmoPenalty, out: *mut f64, len: usize) -> EmoStatus {
    guard(|| {
        let p = &ref_arg(penalty, "penalty")?.inner;
        expect_len("out", len, p.values.len())?;
        slice_out(out, len, "out")?.copy_from_slice(p.values.as_slice().expect("standard layout"));
        Ok(())
    })
}

/// Per-class loss weights `sum_z P[j][z]`; `len` must equal the class count.
///
/// # Safety
/// `penalty` must be a live handle; `out` must hold `len` entries.
#[no_mangle]
pub unsafe extern "C" fn emo_penalty_row_sums(penalty: *const EmoPenalty, out: *mut f64, len: usize) -> EmoStatus {
    guard(|| {
        let p = &ref_arg(penalty, "penalty")?.inner;
        expect_len("out", len, p.num_classes())?;
        slice_out(out, len, "out")?.copy_from_slice(&row_sum_weights(p));
        Ok(())
    })
}

unsafe fn objective(kind: EmoLossKind, alpha: f64, beta: f64, penalty: *const EmoPenalty) -> Objective {
    let p = penalty.as_ref().map(|p| p.inner.clone());
    Objective::new(kind.into(), alpha, beta, p)
}

/// Mean-reduced loss of activated predictions `yp` against targets `yt`.
/// `penalty` may be NULL, in which case the penalized term is 0.
///
/// # Safety
/// `yt` and `yp` must hold `n * c` entries; `penalty` must be NULL or a live
/// handle; out-pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn emo_loss(
    yt: *const f64,
    yp: *const f64,
    n: usize,
    c: usize,
    kind: EmoLossKind,
    alpha: f64,
    beta: f64,
    penalty: *const EmoPenalty,
    out_base: *mut f64,
    out_penalty: *mut f64,
    out_total: *mut f64,
) -> EmoStatus {
    guard(|| {
        let yt = matrix_arg(yt, n, c, "yt")?;
        let yp = matrix_arg(yp, n, c, "yp")?;
        let v = objective(kind, alpha, beta, penalty).value_from_predictions(yt, yp)?;
        write_out(out_base, v.base, "out_base")?;
        write_out(out_penalty, v.penalty, "out_penalty")?;
        write_out(out_total, v.total, "out_total")
    })
}

/// Gradient of the mean-reduced total loss with respect to the raw output
/// scores (before softmax or sigmoid).
///
/// # Safety
/// `yt`, `scores` and `out` must hold `n * c` entries; `penalty` must be NULL
/// or a live handle.
#[no_mangle]
pub unsafe extern "C" fn emo_loss_gradient(
    yt: *const f64,
    scores: *const f64,
    n: usize,
    c: usize,
    kind: EmoLossKind,
    alpha: f64,
    beta: f64,
    penalty: *const EmoPenalty,
    out: *mut f64,
) -> EmoStatus {
    guard(|| {
        let yt = matrix_arg(yt, n, c, "yt")?;
        let s = matrix_arg(scores, n, c, "scores")?;
        let g = objective(kind, alpha, beta, penalty).gradient(yt, s)?;
        matrix_out(out, n, c, "out")?.assign(&g);
        Ok(())
    })
}

/// `out[i][j] = scores[i][j] > threshold`.
///
/// # Safety
/// `scores` and `out` must hold `n * c` entries.
#[no_mangle]
pub unsafe extern "C" fn emo_binarize(scores: *const f64, n: usize, c: usize, threshold: f64, out: *mut u8) -> EmoStatus {
    guard(|| {
        let b = binarize(matrix_arg(scores, n, c, "scores")?, threshold);
        matrix_out(out, n, c, "out")?.assign(&b);
        Ok(())
    })
}

/// Macro, micro and support-weighted F1 of binary matrices.
///
/// # Safety
/// `truth` and `pred` must hold `n * c` entries; out-pointers must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn emo_f1_scores(
    truth: *const u8,
    pred: *const u8,
    n: usize,
    c: usize,
    out_macro: *mut f64,
    out_micro: *mut f64,
    out_weighted: *mut f64,
) -> EmoStatus {
    guard(|| {
        let f = f1_scores(matrix_arg(truth, n, c, "truth")?, matrix_arg(pred, n, c, "pred")?)?;
        write_out(out_macro, f.macro_f1, "out_macro")?;
        write_out(out_micro, f.micro_f1, "out_micro")?;
        write_out(out_weighted, f.weighted_f1, "out_weighted")
    })
}

/// Hamming loss (scores binarized at 0.5), label ranking loss and coverage
/// error.
///
/// # Safety
/// `truth` and `scores` must hold `n * c` entries; out-pointers must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn emo_multilabel_metrics(
    truth: *const u8,
    scores: *const f64,
    n: usize,
    c: usize,
    out_hamming: *mut f64,
    out_ranking_loss: *mut f64,
    out_coverage_error: *mut f64,
) -> EmoStatus {
    guard(|| {
        let m = multilabel_metrics(matrix_arg(truth, n, c, "truth")?, matrix_arg(scores, n, c, "scores")?)?;
        write_out(out_hamming, m.hamming, "out_hamming")?;
        write_out(out_ranking_loss, m.ranking_loss, "out_ranking_loss")?;
        write_out(out_coverage_error, m.coverage_error, "out_coverage_error")
    })
}
