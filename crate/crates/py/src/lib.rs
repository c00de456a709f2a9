//! Python bindings. Structured values cross the boundary as plain dicts and
//! lists with the same shape as the JSON documents the platform emits.

use std::collections::BTreeSet;

use chrono::{DateTime, Duration, Utc};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use uuid::Uuid;

use oconsent::canonical::sha256_hex;
use oconsent::consent::{compute_agreement_hash, create_seed, ConsentAgreement, ConsentProof, Party};
use oconsent::fingerprint::{build_batch_hash, verify_fingerprint_doc, FingerprintProofDoc};
use oconsent::flow::{
    AccessRequest, ConsentRequest, DataAccessKey, FlowConfig, Platform as CorePlatform, ScopeRequest,
    SubjectDecision,
};
use oconsent::identity::{generate_keypair_with_bits, Identity as CoreIdentity, KeyPair as CoreKeyPair, Role, KEY_BITS};
use oconsent::ngac::{check, list_permissions, sample_policy, PolicyGraph as CorePolicyGraph};
use oconsent::timestamp::{BitcoinNTimeProvider, SimulatedTsa, TimestampProvider};

create_exception!(oconsent, OConsentError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    OConsentError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(value: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = value.py().import("json")?.call_method1("dumps", (value,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn parse_time(value: Option<&str>) -> PyResult<DateTime<Utc>> {
    match value {
        None => Ok(Utc::now()),
        Some(s) => s
            .parse::<DateTime<Utc>>()
            .map_err(|e| PyValueError::new_err(format!("bad RFC 3339 time {s:?}: {e}"))),
    }
}

fn parse_uuid(value: &str) -> PyResult<Uuid> {
    value
        .parse()
        .map_err(|e| PyValueError::new_err(format!("bad agreement id {value:?}: {e}")))
}

/// An RSA signing key.
#[pyclass(frozen, name = "KeyPair", module = "oconsent")]
struct KeyPair {
    inner: CoreKeyPair,
}

#[pymethods]
impl KeyPair {
    #[new]
    #[pyo3(signature = (bits = KEY_BITS, seed = None))]
    fn new(bits: usize, seed: Option<u64>) -> PyResult<Self> {
        Ok(KeyPair {
            inner: generate_keypair_with_bits(seed, bits).map_err(err)?,
        })
    }

    #[getter]
    fn key_id(&self) -> &str {
        self.inner.key_id()
    }

    #[getter]
    fn public_key(&self) -> Vec<u8> {
        self.inner.public_key().to_vec()
    }

    #[getter]
    fn public_key_pem(&self) -> String {
        self.inner.public_key_pem()
    }

    fn __repr__(&self) -> String {
        format!("KeyPair(key_id={:?})", self.inner.key_id())
    }
}

/// A protocol actor.
#[pyclass(frozen, name = "Identity", module = "oconsent")]
struct Identity {
    inner: CoreIdentity,
}

#[pymethods]
impl Identity {
    #[new]
    #[pyo3(signature = (role, name, id = None))]
    fn new(role: &str, name: &str, id: Option<String>) -> PyResult<Self> {
        let role: Role = role.parse().map_err(PyValueError::new_err)?;
        let inner = match id {
            Some(id) => CoreIdentity::with_id(id, role, name),
            None => CoreIdentity::new(role, name),
        };
        Ok(Identity { inner })
    }

    #[getter]
    fn id(&self) -> &str {
        self.inner.id()
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.display_name
    }

    #[getter]
    fn role<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.role())
    }

    fn __repr__(&self) -> String {
        format!("Identity(id={:?}, role={:?}, name={:?})", self.inner.id(), self.inner.role(), self.inner.display_name)
    }
}

/// An NGAC policy graph.
#[pyclass(frozen, name = "PolicyGraph", module = "oconsent")]
struct PolicyGraph {
    inner: CorePolicyGraph,
}

#[pymethods]
impl PolicyGraph {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PolicyGraph {
            inner: CorePolicyGraph::from_json(text).map_err(err)?,
        })
    }

    /// The bundled sample policy.
    #[staticmethod]
    fn sample() -> Self {
        PolicyGraph { inner: sample_policy().0 }
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn list_permissions(&self, user: &str, object: &str) -> PyResult<BTreeSet<String>> {
        Ok(list_permissions(&self.inner, user, object).map_err(err)?.ops)
    }

    fn check(&self, user: &str, op: &str, object: &str) -> PyResult<bool> {
        check(&self.inner, user, op, object).map_err(err)
    }
}

/// A consent platform with a simulated timestamp authority and Bitcoin
/// header feed, held in memory.
#[pyclass(frozen, name = "Platform", module = "oconsent")]
struct Platform {
    inner: CorePlatform,
}

#[pymethods]
impl Platform {
    #[new]
    #[pyo3(signature = (key, tsa_key, genesis = None))]
    fn new(key: &KeyPair, tsa_key: &KeyPair, genesis: Option<&str>) -> PyResult<Self> {
        let genesis = parse_time(genesis)?;
        let providers: Vec<Box<dyn TimestampProvider>> = vec![
            Box::new(SimulatedTsa::new(tsa_key.inner.clone())),
            Box::new(BitcoinNTimeProvider::synthetic(genesis - Duration::days(1), 6 * 24 * 400, 1)),
        ];
        Ok(Platform {
            inner: CorePlatform::new(key.inner.clone(), providers, FlowConfig::default(), genesis),
        })
    }

    #[getter]
    fn public_key(&self) -> Vec<u8> {
        self.inner.public_key().to_vec()
    }

    fn register_party(&self, identity: &Identity, public_key: Vec<u8>) {
        self.inner.register_party(identity.inner.clone(), public_key);
    }

    /// A consent request with a fresh seed signed by the controller.
    /// `scopes` maps purposes to attribute lists, or to
    /// `{"data_attributes": [...], "expiry": "YYYY-MM-DD"}`.
    #[pyo3(signature = (controller, controller_key, subject_id, context, scopes, lease_days = None, transferrable = false, aux = Vec::new()))]
    #[allow(clippy::too_many_arguments)]
    fn consent_request<'py>(
        &self,
        py: Python<'py>,
        controller: &Identity,
        controller_key: &KeyPair,
        subject_id: String,
        context: String,
        scopes: &Bound<'py, PyAny>,
        lease_days: Option<u32>,
        transferrable: bool,
        aux: Vec<PyRef<'py, Identity>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let raw: serde_json::Map<String, serde_json::Value> = from_py(scopes)?;
        let mut requested_scope = Vec::new();
        for (purpose, spec) in raw {
            let mut entry = serde_json::json!({ "purpose": purpose, "expiry": null });
            match spec {
                serde_json::Value::Array(attrs) => entry["data_attributes"] = attrs.into(),
                serde_json::Value::Object(fields) => {
                    for (k, v) in fields {
                        entry[k] = v;
                    }
                }
                other => return Err(PyValueError::new_err(format!("scope for {purpose:?} must be a list or dict, got {other}"))),
            }
            requested_scope.push(serde_json::from_value::<ScopeRequest>(entry).map_err(|e| PyValueError::new_err(e.to_string()))?);
        }
        let (seed, seed_signature) = create_seed(&controller.inner, &controller_key.inner).map_err(err)?;
        let request = ConsentRequest {
            controller_id: controller.inner.id().to_owned(),
            subject_id,
            context,
            requested_scope,
            seed,
            seed_signature,
            lease_days,
            is_transferrable: transferrable,
            data_controller_aux: aux
                .iter()
                .map(|a| Party {
                    name: a.inner.display_name.clone(),
                    id: a.inner.id().to_owned(),
                })
                .collect(),
        };
        to_py(py, &request)
    }

    #[pyo3(signature = (request, now = None))]
    fn handle_context<'py>(&self, py: Python<'py>, request: &Bound<'py, PyAny>, now: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
        let request: ConsentRequest = from_py(request)?;
        to_py(py, &self.inner.handle_context(&request, parse_time(now)?).map_err(err)?)
    }

    /// Run the creation flow. `subject_key=None` declines.
    #[pyo3(signature = (request, subject_key, now = None))]
    fn create<'py>(
        &self,
        py: Python<'py>,
        request: &Bound<'py, PyAny>,
        subject_key: Option<&KeyPair>,
        now: Option<&str>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let request: ConsentRequest = from_py(request)?;
        let decision = match subject_key {
            Some(k) => SubjectDecision::Accept { subject_key: &k.inner },
            None => SubjectDecision::Decline,
        };
        let now = parse_time(now)?;
        let outcome = py.detach(|| self.inner.run_creation_flow(&request, decision, now)).map_err(err)?;
        to_py(py, &outcome)
    }

    fn record<'py>(&self, py: Python<'py>, agreement_id: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.record(&parse_uuid(agreement_id)?))
    }

    #[pyo3(signature = (requester, agreement_id, purpose, attributes, ops = vec!["r".to_owned()], now = None))]
    #[allow(clippy::too_many_arguments)]
    fn request_access<'py>(
        &self,
        py: Python<'py>,
        requester: String,
        agreement_id: &str,
        purpose: String,
        attributes: Vec<String>,
        ops: Vec<String>,
        now: Option<&str>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let request = AccessRequest {
            requester,
            agreement_hash_id: parse_uuid(agreement_id)?,
            purpose,
            ops: ops.into_iter().collect(),
            attributes,
        };
        let now = parse_time(now)?;
        let outcome = py.detach(|| self.inner.request_access(&request, now)).map_err(err)?;
        to_py(py, &outcome)
    }

    #[pyo3(signature = (subject_id, agreement_id, now = None))]
    fn revoke(&self, py: Python<'_>, subject_id: &str, agreement_id: &str, now: Option<&str>) -> PyResult<()> {
        let id = parse_uuid(agreement_id)?;
        let now = parse_time(now)?;
        py.detach(|| self.inner.revoke(subject_id, &id, now)).map_err(err)
    }

    #[pyo3(signature = (dak, now = None))]
    fn validate_dak(&self, dak: &Bound<'_, PyAny>, now: Option<&str>) -> PyResult<bool> {
        let dak: DataAccessKey = from_py(dak)?;
        Ok(dak.signature_valid(self.inner.public_key()) && self.inner.validate_dak(&dak, parse_time(now)?))
    }

    fn verify_consent_proof<'py>(&self, py: Python<'py>, proof: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
        let proof: ConsentProof = from_py(proof)?;
        let check = self.inner.verify_consent_proof(&proof);
        let out = to_py(py, &check)?;
        out.set_item("passed", check.passed())?;
        Ok(out)
    }

    #[pyo3(signature = (now = None, btc_confirmations = 6, eth_confirmations = 3))]
    fn anchor_now<'py>(
        &self,
        py: Python<'py>,
        now: Option<&str>,
        btc_confirmations: u64,
        eth_confirmations: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let now = parse_time(now)?;
        let summary = py
            .detach(|| self.inner.anchor_now(now, btc_confirmations, eth_confirmations))
            .map_err(err)?;
        to_py(py, &summary)
    }

    fn reconcile<'py>(&self, py: Python<'py>, agreement_id: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.reconcile(&parse_uuid(agreement_id)?).map_err(err)?)
    }

    /// Verify a fingerprint proof document against this platform's chains.
    fn verify_fingerprint<'py>(&self, py: Python<'py>, doc: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
        let doc: FingerprintProofDoc = from_py(doc)?;
        let check = self
            .inner
            .with_chain(|chain| self.inner.with_main_chains(|btc, eth| verify_fingerprint_doc(&doc, Some(chain), &[btc, eth])));
        to_py(py, &check)
    }

    fn export_audit<'py>(&self, py: Python<'py>, agreement_id: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.export_audit(&parse_uuid(agreement_id)?).map_err(err)?)
    }

    fn cache_stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.cache().stats())
    }

    #[getter]
    fn chain_height(&self) -> u64 {
        self.inner.with_chain(|c| c.height())
    }

    fn chain_block<'py>(&self, py: Python<'py>, height: u64) -> PyResult<Bound<'py, PyAny>> {
        let block = self.inner.with_chain(|c| c.block(height).cloned());
        to_py(py, &block)
    }

    fn policy(&self) -> PolicyGraph {
        PolicyGraph { inner: self.inner.policy() }
    }
}

/// SHA-256 over the canonical JSON of an agreement, as hex.
#[pyfunction]
fn agreement_hash(agreement: &Bound<'_, PyAny>) -> PyResult<String> {
    let agreement: ConsentAgreement = from_py(agreement)?;
    compute_agreement_hash(&agreement).map_err(err)
}

/// Root of the batch Merkle tree over 64-character hex leaves.
#[pyfunction]
fn merkle_root(leaves: Vec<String>) -> PyResult<String> {
    Ok(build_batch_hash(&leaves).map_err(err)?.root)
}

#[pyfunction]
fn sha256(data: &[u8]) -> String {
    sha256_hex(data)
}

/// The `oconsent` module; public so embedders can register it with
/// `pyo3::append_to_inittab!`.
#[pymodule(name = "oconsent")]
pub fn oconsent_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("OConsentError", m.py().get_type::<OConsentError>())?;
    m.add_class::<KeyPair>()?;
    m.add_class::<Identity>()?;
    m.add_class::<PolicyGraph>()?;
    m.add_class::<Platform>()?;
    m.add_function(wrap_pyfunction!(agreement_hash, m)?)?;
    m.add_function(wrap_pyfunction!(merkle_root, m)?)?;
    m.add_function(wrap_pyfunction!(sha256, m)?)?;
    Ok(())
}
