"""Independent reference implementations used to check derived behavior.

These deliberately avoid the library's own code paths: the beam oracle
enumerates every decodable output; the n-gram oracles enumerate n-grams
positionally instead of via Counter arithmetic.
"""

from pickgen.corpus import EOS_ID, SOS_ID, tokenize
from pickgen.decoding import _encode_single, _next_log_probs
from pickgen.labeling import normalize, to_bio


def oracle_hard_rows(sample, cfg):
    """Set-membership reimplementation of hard labeling: a context word is
    important iff its normalized form appears in the reference and not in
    the incomplete utterance, bypassing the cosine machinery entirely."""
    ref_forms = {f for _, f in normalize(tokenize(sample.reference, cfg), cfg)}
    inc_forms = {f for _, f in normalize(tokenize(sample.incomplete, cfg), cfg)}
    clues = ref_forms - inc_forms
    rows = []
    for utterance in sample.context:
        words = tokenize(utterance, cfg)
        bits = [0] * len(words)
        for idx, form in normalize(words, cfg):
            if form in clues:
                bits[idx] = 1
        rows.append(tuple(to_bio(bits)))
    return tuple(rows)


def exhaustive_best_hypothesis(params, input_ids, max_len, penalty=1.0):
    """Global argmax over every EOS-terminated output of at most max_len
    generated tokens: returns (score, full id tuple including SOS/EOS)."""
    enc = _encode_single(params, input_ids)
    vocab = params.config.vocab_size
    best = None

    def consider(score, ids):
        nonlocal best
        if best is None or score > best[0] or (score == best[0] and ids < best[1]):
            best = (score, ids)

    def expand(prefix, logp):
        row = _next_log_probs(params, enc, [prefix])[0]
        ids = prefix + (EOS_ID,)
        consider((logp + float(row[EOS_ID])) / (len(ids) - 1) ** penalty, ids)
        if len(prefix) < max_len:
            for token in range(vocab):
                if token != EOS_ID:
                    expand(prefix + (token,), logp + float(row[token]))

    expand((SOS_ID,), 0.0)
    return best


def enumerate_ngrams(tokens, n):
    """All positional n-grams of a token list, as a list (not a Counter)."""
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def _clipped_f1(pred_grams, ref_grams):
    remaining = list(ref_grams)
    overlap = 0
    for gram in pred_grams:
        if gram in remaining:
            remaining.remove(gram)
            overlap += 1
    precision = overlap / len(pred_grams)
    recall = overlap / len(ref_grams)
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def ngram_f1_by_enumeration(pred, ref, n):
    """Clipped n-gram F1 by direct positional matching."""
    pred_grams = enumerate_ngrams(pred, n)
    ref_grams = enumerate_ngrams(ref, n)
    if not pred_grams or not ref_grams:
        return 0.0
    return _clipped_f1(pred_grams, ref_grams)


def restored_positions_by_type(tokens, incomplete):
    """Indices of occurrences beyond the incomplete utterance's per-type
    count, found by slicing each type's position list (not by scanning)."""
    restored = set()
    for token in set(tokens):
        positions = [i for i, t in enumerate(tokens) if t == token]
        restored.update(positions[incomplete.count(token):])
    return restored


def restoration_f_by_enumeration(pred, ref, incomplete, n):
    """Clipped F1 over n-grams touching a restored position."""

    def grams(tokens):
        restored = restored_positions_by_type(tokens, incomplete)
        return [
            gram
            for i, gram in enumerate(enumerate_ngrams(tokens, n))
            if any(j in restored for j in range(i, i + n))
        ]

    pred_grams = grams(pred)
    ref_grams = grams(ref)
    if not pred_grams and not ref_grams:
        return 1.0
    if not pred_grams or not ref_grams:
        return 0.0
    return _clipped_f1(pred_grams, ref_grams)
