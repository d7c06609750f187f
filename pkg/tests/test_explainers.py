"""Estimator behavior: exact recovery, decoupling, matching, model IO.

The linear-ground-truth fixtures build H and targets directly from known
coefficient matrices so that every expected value has a closed form that
does not pass through the code under test.
"""

import json
import warnings

import numpy as np
import pytest

from mcce import (
    ConceptSchema,
    Dataset,
    EditPair,
    MCCEModel,
    Sample,
    SLearnerModel,
    ValidationError,
    build_label_index,
    encode,
    explain_approx,
    explain_mcce,
    explain_slearner,
    fit_mcce,
    fit_slearner,
    global_report,
    intervene,
    load_model,
    predict_labels,
    read_effects,
    save_model,
    softmax,
    write_effects,
)
from mcce.linalg import lstsq, max_abs_cross

SCHEMA = ConceptSchema.of([("a", ("x", "y")), ("b", ("u", "v", "w"))])  # width 5


def linear_dataset(n=80, seed=0, q=4, embed_dim=8, noise=0.0, hidden=(), gold=False):
    """Samples with H = C_full @ Bmap.T and targets = C_full @ beta.

    Returns (dataset, beta, Bmap). Bmap has orthonormal columns so each
    level direction is exactly recoverable from the embedding.
    """
    rng = np.random.default_rng(seed)
    width = SCHEMA.width
    Bmap, _ = np.linalg.qr(rng.standard_normal((embed_dim, width)))
    beta = rng.standard_normal((width, q))
    samples = []
    for i in range(n):
        labels = {"a": ("x", "y")[rng.integers(2)], "b": ("u", "v", "w")[rng.integers(3)]}
        c = encode(SCHEMA, labels)
        e = Bmap @ c
        y = c @ beta + noise * rng.standard_normal(q)
        g = int(np.argmax(c @ beta)) if gold else None
        samples.append(Sample(f"s{i}", labels, e, y, g))
    ds = Dataset(SCHEMA, tuple(samples), hidden_attributes=frozenset(hidden))
    return ds, beta, Bmap


# --- fit_mcce ------------------------------------------------------------

def test_fit_recovers_contrasts_fully_observed():
    ds, beta, _ = linear_dataset()
    model = fit_mcce(ds)
    # raw coefficients are only identified up to per-block constants;
    # compare within-block contrasts
    est, ref = model.concept_coef, beta
    assert np.allclose(est[1] - est[0], ref[1] - ref[0], atol=1e-8)
    assert np.allclose(est[3] - est[2], ref[3] - ref[2], atol=1e-8)
    assert np.allclose(est[4] - est[2], ref[4] - ref[2], atol=1e-8)
    assert model.diagnostics["fit_residual_sos"] < 1e-16


def test_fit_zero_targets_zero_coefficients():
    ds, _, _ = linear_dataset()
    zeros = np.zeros((len(ds.samples), 3))
    model = fit_mcce(ds, targets=zeros)
    assert np.max(np.abs(model.concept_coef)) < 1e-12
    assert np.max(np.abs(model.pseudo_coef)) < 1e-12


def test_fit_hidden_attribute_still_fits_targets_exactly():
    # the embedding carries the hidden block; pseudo-concepts recover it
    ds, beta, _ = linear_dataset(hidden={"a"})
    model = fit_mcce(ds)
    assert model.diagnostics["fit_residual_sos"] < 1e-12
    preds = np.array(
        [model.predict(ds.encode_sample(s), s.embedding) for s in ds.samples]
    )
    targets = ds.outputs()
    assert np.max(np.abs(preds - targets)) < 1e-6


def test_fit_orthogonality_diagnostic():
    ds, _, _ = linear_dataset(hidden={"b"}, noise=0.3)
    model = fit_mcce(ds)
    assert model.diagnostics["orthogonality_max"] < 1e-8


def test_fit_decoupling_identity():
    # the decoupled solves must agree with the joint min-norm regression on
    # [C S]; they do because the score columns are orthogonal to the design
    ds, _, _ = linear_dataset(hidden={"a"}, noise=0.2, seed=4)
    model = fit_mcce(ds)
    C = ds.design_matrix(ds.fit_samples())
    H = ds.embeddings(ds.fit_samples())
    T = ds.outputs(ds.fit_samples())
    assert np.allclose(model.concept_coef, lstsq(C, T).coefficients, atol=1e-8)
    S = (H - C @ model.embed_coef) @ model.pseudo_basis
    joint = lstsq(np.hstack([C, S]), T).coefficients
    k = C.shape[1]
    assert np.allclose(joint[:k], model.concept_coef, atol=1e-8)
    assert np.allclose(joint[k:], model.pseudo_coef, atol=1e-8)


def test_fit_pseudo_basis_rotation_invariance():
    # predictions depend on span(pseudo_basis), not the basis itself
    ds, _, _ = linear_dataset(hidden={"a"}, noise=0.1, seed=5)
    model = fit_mcce(ds, n_pseudo=2)
    rng = np.random.default_rng(6)
    Q, _ = np.linalg.qr(rng.standard_normal((2, 2)))
    rotated = MCCEModel(
        schema=model.schema,
        hidden_attributes=model.hidden_attributes,
        embed_coef=model.embed_coef,
        pseudo_basis=model.pseudo_basis @ Q,
        concept_coef=model.concept_coef,
        pseudo_coef=Q.T @ model.pseudo_coef,
        ridge=model.ridge,
        n_pseudo=model.n_pseudo,
        space=model.space,
        target_kind=model.target_kind,
        diagnostics=model.diagnostics,
    )
    for s in ds.samples[:10]:
        c = ds.encode_sample(s)
        assert np.allclose(model.predict(c, s.embedding), rotated.predict(c, s.embedding), atol=1e-8)


def test_fit_interpolation_regime_reproduces_targets():
    # generic full-rank embeddings, n <= k_vis + j: concepts span 4 of the
    # 8 row dimensions, the residual scores span the other 4, so the
    # decoupled projections interpolate the training targets
    rng = np.random.default_rng(7)
    samples = []
    for i in range(8):
        labels = {"a": ("x", "y")[rng.integers(2)], "b": ("u", "v", "w")[rng.integers(3)]}
        samples.append(Sample(f"s{i}", labels, rng.standard_normal(8), rng.standard_normal(4)))
    ds = Dataset(SCHEMA, tuple(samples))
    with pytest.warns(UserWarning):
        model = fit_mcce(ds, n_pseudo=5)
    for s in ds.samples:
        pred = model.predict(ds.encode_sample(s), s.embedding)
        assert np.allclose(pred, s.blackbox_output, atol=1e-6)


def test_fit_validation_errors():
    ds, _, _ = linear_dataset(n=20)
    with pytest.raises(ValidationError):
        fit_mcce(ds, n_pseudo=0)
    with pytest.raises(ValidationError):
        fit_mcce(ds, n_pseudo=9)  # > embed_dim 8
    with pytest.raises(ValidationError):
        fit_mcce(ds, ridge=-1.0)
    with pytest.raises(ValidationError):
        fit_mcce(ds, targets=np.zeros((3, 2)))  # row mismatch
    with pytest.raises(ValidationError):
        fit_mcce(Dataset(SCHEMA, ()))  # nothing to fit
    with pytest.raises(ValidationError):
        fit_mcce(ds, target_kind="gold")  # no gold labels present


def test_fit_gold_targets_one_hot():
    ds, beta, _ = linear_dataset(gold=True)
    model = fit_mcce(ds, target_kind="gold")
    assert model.target_kind == "gold"
    assert model.n_outputs == beta.shape[1]


# --- explain_mcce ----------------------------------------------------------

def test_explain_effect_matches_coefficient_contrast():
    # noiseless linear ground truth: effect must equal the beta contrast
    ds, beta, _ = linear_dataset(seed=8)
    model = fit_mcce(ds)
    sample = ds.samples[0]
    current = sample.concept_labels["b"]
    for to in ("u", "v", "w"):
        eff = explain_mcce(model, sample, "b", to)
        rows = {"u": 2, "v": 3, "w": 4}
        want = beta[rows[to]] - beta[rows[current]]
        assert np.allclose(eff.effect, want, atol=1e-6)
        assert eff.method == "mcce" and eff.space == "logit"
        assert eff.from_level == current and eff.to_level == to


def test_explain_closed_form_identity():
    # effect = dc @ concept_coef - (dc @ embed_coef @ basis) @ pseudo_coef
    #          + (factual fit residual)
    ds, _, _ = linear_dataset(hidden={"a"}, noise=0.4, seed=9)
    model = fit_mcce(ds)
    for s in ds.samples[:20]:
        c = ds.encode_sample(s)
        for to in ("u", "v", "w"):
            c2 = intervene(SCHEMA, c, "b", to, hidden={"a"})
            dc = c2 - c
            fit_resid = model.predict(c, s.embedding) - s.blackbox_output
            closed = (
                dc @ model.concept_coef
                - (dc @ model.embed_coef @ model.pseudo_basis) @ model.pseudo_coef
                + fit_resid
            )
            eff = explain_mcce(model, s, "b", to)
            assert np.allclose(eff.effect, closed, atol=1e-8)


def test_explain_null_intervention_is_fit_residual():
    ds, _, _ = linear_dataset(noise=0.3, seed=10)
    model = fit_mcce(ds)
    s = ds.samples[0]
    eff = explain_mcce(model, s, "b", s.concept_labels["b"])
    resid = model.predict(ds.encode_sample(s), s.embedding) - s.blackbox_output
    assert np.allclose(eff.effect, resid, atol=1e-12)


def test_explain_rejects_hidden_or_unknown():
    ds, _, _ = linear_dataset(hidden={"a"})
    model = fit_mcce(ds)
    with pytest.raises(ValidationError):
        explain_mcce(model, ds.samples[0], "a", "y")
    with pytest.raises(ValidationError):
        explain_mcce(model, ds.samples[0], "b", "nope")
    with pytest.raises(ValidationError):
        explain_mcce(model, ds.samples[0], "zzz", "u")


# --- s-learner ---------------------------------------------------------------

def test_slearner_uniform_targets_stop_immediately():
    ds, _, _ = linear_dataset(n=30)
    uniform = np.full((30, 4), 0.25)
    model = fit_slearner(ds, targets=uniform)
    assert model.iterations == 0
    assert np.max(np.abs(model.weights)) == 0.0
    probs = model.predict_proba(ds.encode_sample(ds.samples[0]))
    assert np.allclose(probs, 0.25, atol=1e-12)


def test_slearner_fits_concept_determined_distribution():
    # targets depend on concepts only -> the logistic model can match them
    rng = np.random.default_rng(14)
    W = rng.standard_normal((SCHEMA.width, 3))
    samples = []
    for i in range(200):
        labels = {"a": ("x", "y")[rng.integers(2)], "b": ("u", "v", "w")[rng.integers(3)]}
        c = encode(SCHEMA, labels)
        samples.append(Sample(f"s{i}", labels, np.zeros(2), c @ W))
    ds = Dataset(SCHEMA, tuple(samples))
    model = fit_slearner(ds)
    for s in ds.samples[:20]:
        want = softmax((encode(SCHEMA, s.concept_labels) @ W)[None, :])[0]
        got = model.predict_proba(encode(SCHEMA, s.concept_labels))
        assert np.max(np.abs(got - want)) < 0.01


def test_slearner_effect_space_and_null_intervention():
    ds, _, _ = linear_dataset(noise=0.2, seed=15)
    model = fit_slearner(ds)
    s = ds.samples[0]
    eff = explain_slearner(model, s, "b", s.concept_labels["b"])
    want = model.predict_proba(ds.encode_sample(s)) - softmax(s.blackbox_output[None, :])[0]
    assert eff.space == "probability"
    assert np.allclose(eff.effect, want, atol=1e-12)


def test_slearner_rejects_bad_probability_targets():
    ds, _, _ = linear_dataset(n=10)
    bad = np.full((10, 4), 0.3)  # rows do not sum to 1
    with pytest.raises(ValidationError):
        fit_slearner(ds, targets=bad)


# --- approx ------------------------------------------------------------------

def approx_dataset():
    def s(sid, a, b, out):
        return Sample(sid, {"a": a, "b": b}, np.zeros(1), np.array(out, dtype=float))

    samples = (
        s("q", "x", "u", (0.0, 0.0)),
        s("m1", "x", "v", (1.0, 2.0)),
        s("m2", "x", "v", (3.0, 4.0)),
        s("far", "y", "w", (9.0, 9.0)),
    )
    return Dataset(SCHEMA, samples)


def test_approx_exact_match_is_bitwise_icace():
    ds = approx_dataset()
    q = ds.by_id("q")
    rng_hits = set()
    for seed in range(100):
        eff = explain_approx(ds, q, "b", "v", seed=seed)
        assert eff.fallback is False
        assert eff.method == "approx"
        # effect must be exactly output(match) - output(q), bit for bit
        assert eff.effect.tolist() in ([1.0, 2.0], [3.0, 4.0])
        rng_hits.add(tuple(eff.effect.tolist()))
    assert len(rng_hits) == 2  # both candidates get sampled across seeds


def test_approx_is_deterministic_per_seed():
    ds = approx_dataset()
    q = ds.by_id("q")
    a = explain_approx(ds, q, "b", "v", seed=123)
    b = explain_approx(ds, q, "b", "v", seed=123)
    assert np.array_equal(a.effect, b.effect)


def test_approx_fallback_flag_and_min_hamming():
    ds = approx_dataset()
    q = ds.by_id("q")
    # no sample has (a=x, b=w): nearest by visible Hamming is "far"? no:
    # m1/m2 (a=x, b=v) differ only in b -> distance 1; far (y,w) differs in a -> 1.
    # all three tie at distance 1; the winner must be one of them
    eff = explain_approx(ds, q, "b", "w", seed=0)
    assert eff.fallback is True
    assert eff.effect.tolist() in ([1.0, 2.0], [3.0, 4.0], [9.0, 9.0])


def test_approx_prebuilt_index_matches():
    ds = approx_dataset()
    idx = build_label_index(ds)
    q = ds.by_id("q")
    a = explain_approx(ds, q, "b", "v", seed=7)
    b = explain_approx(ds, q, "b", "v", seed=7, index=idx)
    assert np.array_equal(a.effect, b.effect)


def test_approx_hidden_edit_degrades_to_visible_profile():
    ds = approx_dataset().mask({"b"})
    q = ds.by_id("q")
    # editing the hidden attribute: match on visible labels only (a=x)
    eff = explain_approx(ds, q, "b", "v", seed=3)
    assert eff.fallback is False
    assert eff.from_level is None  # hidden attribute, origin level unknown
    assert eff.effect.tolist() in ([1.0, 2.0], [3.0, 4.0])


def test_approx_errors():
    ds = approx_dataset()
    with pytest.raises(ValidationError):
        explain_approx(ds, ds.by_id("q"), "b", "nope", seed=0)
    with pytest.raises(ValidationError):
        explain_approx(ds, ds.by_id("q"), "zzz", "u", seed=0)


# --- global report / predictor ------------------------------------------------

def test_global_report_baseline_column_zero():
    ds, _, _ = linear_dataset(seed=16)
    model = fit_mcce(ds)
    for base in range(4):
        rep = global_report(model, base)
        M = rep.matrix()
        assert M.shape == (5, 4)
        assert np.max(np.abs(M[:, base])) == 0.0


def test_global_report_invariant_to_block_shifts():
    ds, _, _ = linear_dataset(seed=17)
    model = fit_mcce(ds)
    rep = global_report(model, 0)
    shifted_coef = model.concept_coef.copy()
    shifted_coef[0:2] += 3.7
    shifted_coef[2:5] -= 1.2
    shifted = MCCEModel(
        schema=model.schema,
        hidden_attributes=model.hidden_attributes,
        embed_coef=model.embed_coef,
        pseudo_basis=model.pseudo_basis,
        concept_coef=shifted_coef,
        pseudo_coef=model.pseudo_coef,
        ridge=model.ridge,
        n_pseudo=model.n_pseudo,
        space=model.space,
        target_kind=model.target_kind,
        diagnostics=model.diagnostics,
    )
    rep2 = global_report(shifted, 0)
    # contrasts against the baseline class are shift-invariant per class,
    # not per block; rows change but row DIFFERENCES within a block do not
    m1, m2 = rep.matrix(), rep2.matrix()
    assert np.allclose(m1[1] - m1[0], m2[1] - m2[0], atol=1e-12)
    assert np.allclose(m1[3] - m1[2], m2[3] - m2[2], atol=1e-12)


def test_global_report_csv_and_errors():
    ds, _, _ = linear_dataset(seed=18)
    model = fit_mcce(ds)
    rep = global_report(model, 1)
    lines = rep.to_csv().strip().split("\n")
    assert lines[0] == "attribute,level,class_0,class_1,class_2,class_3"
    assert len(lines) == 6  # header + 5 visible levels
    with pytest.raises(ValidationError):
        global_report(model, 4)
    with pytest.raises(ValidationError):
        global_report(model, -1)
    slearner = fit_slearner(ds)
    with pytest.raises(ValidationError):
        global_report(slearner, 0)


def test_predict_labels_recovers_separable_gold():
    ds, _, _ = linear_dataset(gold=True, seed=19)
    model = fit_mcce(ds, target_kind="gold")
    preds = predict_labels(model, ds)
    assert np.array_equal(preds, ds.gold_array())


def test_predict_labels_requires_gold_mode():
    ds, _, _ = linear_dataset(gold=True, seed=20)
    model = fit_mcce(ds)  # output targets
    with pytest.raises(ValidationError):
        predict_labels(model, ds)


# --- model and effects IO -------------------------------------------------------

def test_model_roundtrip_mcce(tmp_path):
    ds, _, _ = linear_dataset(hidden={"a"}, noise=0.1, seed=21)
    model = fit_mcce(ds, ridge=0.01)
    path = tmp_path / "model.json"
    save_model(model, path)
    back = load_model(path)
    assert isinstance(back, MCCEModel)
    assert back.schema == model.schema
    assert back.hidden_attributes == model.hidden_attributes
    assert back.space == model.space and back.target_kind == model.target_kind
    for field in ("embed_coef", "pseudo_basis", "concept_coef", "pseudo_coef"):
        assert np.array_equal(getattr(back, field), getattr(model, field))
    s = ds.samples[0]
    c = ds.encode_sample(s)
    assert np.array_equal(back.predict(c, s.embedding), model.predict(c, s.embedding))


def test_model_roundtrip_slearner(tmp_path):
    ds, _, _ = linear_dataset(n=30, seed=22)
    model = fit_slearner(ds)
    path = tmp_path / "model.json"
    save_model(model, path)
    back = load_model(path)
    assert isinstance(back, SLearnerModel)
    assert np.array_equal(back.weights, model.weights)
    assert np.array_equal(back.bias, model.bias)


def test_load_model_rejects_tampered_shapes(tmp_path):
    ds, _, _ = linear_dataset(n=30, seed=23)
    path = tmp_path / "model.json"
    save_model(fit_mcce(ds), path)
    obj = json.loads(path.read_text())
    obj["concept_coef"] = [[1.0, 2.0]]
    path.write_text(json.dumps(obj))
    with pytest.raises(ValidationError):
        load_model(path)
    path.write_text("{\"kind\": \"banana\"}")
    with pytest.raises(ValidationError):
        load_model(path)


def test_effects_roundtrip(tmp_path):
    ds, _, _ = linear_dataset(seed=24)
    model = fit_mcce(ds)
    effects = [explain_mcce(model, ds.samples[i], "b", "u") for i in range(5)]
    path = tmp_path / "effects.jsonl"
    write_effects(path, effects, {"method": "mcce", "space": "logit", "seed": 0})
    back, meta = read_effects(path)
    assert meta["method"] == "mcce" and meta["seed"] == 0
    assert len(back) == 5
    for e, b in zip(effects, back):
        assert e.sample_id == b.sample_id and e.attribute == b.attribute
        assert e.from_level == b.from_level and e.to_level == b.to_level
        assert np.array_equal(e.effect, b.effect)
        assert b.fallback is False
    first_line = path.read_text().splitlines()[0]
    assert json.loads(first_line).keys() == {"meta"}
