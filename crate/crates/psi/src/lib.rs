//! Two-party private set intersection by commutative Diffie-Hellman blinding
//! over the Ristretto group.
//!
//! The receiver sends `a*H(x)` for its elements; the sender answers with
//! `b*(a*H(x))` in the same order and with its own `b*H(y)` sorted by encoding.
//! The receiver raises the latter to `a` and matches. Three messages per run.

use std::collections::{BTreeMap, HashSet};

use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256, Sha512};
use simnet::{tags, Endpoint, NetError, Network, PartyId, Transcript};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PsiError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("cannot decode group element list: {0}")]
    Decode(String),
    #[error("duplicate element in set")]
    Duplicate,
    #[error("empty set")]
    Empty,
    #[error("parties share no ids")]
    EmptyIntersection,
}

pub type Result<T> = std::result::Result<T, PsiError>;

/// Distinct byte-string elements of one party.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PsiSet {
    elements: Vec<Vec<u8>>,
}

impl PsiSet {
    pub fn new<I, T>(elements: I) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        let elements: Vec<Vec<u8>> = elements.into_iter().map(|e| e.as_ref().to_vec()).collect();
        let mut seen = HashSet::with_capacity(elements.len());
        if !elements.iter().all(|e| seen.insert(e.as_slice())) {
            return Err(PsiError::Duplicate);
        }
        if elements.is_empty() {
            return Err(PsiError::Empty);
        }
        Ok(Self { elements })
    }

    pub fn elements(&self) -> &[Vec<u8>] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// 32-byte id digest used as the canonical element form.
pub fn id_hash(id: &[u8]) -> [u8; 32] {
    Sha256::digest(id).into()
}

fn hash_to_group(element: &[u8]) -> RistrettoPoint {
    let wide: [u8; 64] = Sha512::digest(id_hash(element)).into();
    RistrettoPoint::from_uniform_bytes(&wide)
}

fn random_scalar<R: Rng + ?Sized>(rng: &mut R) -> Scalar {
    let mut wide = [0u8; 64];
    rng.fill(&mut wide[..]);
    Scalar::from_bytes_mod_order_wide(&wide)
}

/// `u32` LE count followed by 32-byte compressed points.
fn encode_points(points: &[CompressedRistretto]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 32 * points.len());
    out.extend_from_slice(&(points.len() as u32).to_le_bytes());
    for p in points {
        out.extend_from_slice(p.as_bytes());
    }
    out
}

fn decode_points(bytes: &[u8]) -> Result<Vec<CompressedRistretto>> {
    let (head, body) = bytes.split_at_checked(4).ok_or_else(|| PsiError::Decode("missing count".into()))?;
    let count = u32::from_le_bytes(head.try_into().expect("4 bytes")) as usize;
    if body.len() != count * 32 {
        return Err(PsiError::Decode(format!("{count} elements but {} bytes", body.len())));
    }
    body.chunks_exact(32).map(|c| CompressedRistretto::from_slice(c).map_err(|e| PsiError::Decode(e.to_string()))).collect()
}

fn decompress(p: &CompressedRistretto) -> Result<RistrettoPoint> {
    p.decompress().ok_or_else(|| PsiError::Decode("not a group element".into()))
}

/// Receiver side. Returns the intersection in the receiver's element order.
pub async fn psi_receiver<R: Rng + ?Sized>(
    ep: &Endpoint,
    sender: PartyId,
    set: &PsiSet,
    rng: &mut R,
) -> Result<Vec<Vec<u8>>> {
    let a = random_scalar(rng);
    let blinded: Vec<CompressedRistretto> = set.elements.iter().map(|e| (a * hash_to_group(e)).compress()).collect();
    ep.send(sender, tags::PSI_BLIND_REQ, encode_points(&blinded))?;
    let double = decode_points(&ep.expect(sender, tags::PSI_BLIND_RESP).await?)?;
    if double.len() != set.len() {
        return Err(PsiError::Decode(format!("expected {} replies, got {}", set.len(), double.len())));
    }
    let theirs = decode_points(&ep.expect(sender, tags::PSI_BLIND_RESP).await?)?;
    let theirs: HashSet<[u8; 32]> =
        theirs.iter().map(|p| decompress(p).map(|q| (a * q).compress().to_bytes())).collect::<Result<_>>()?;
    Ok(set.elements.iter().zip(&double).filter(|(_, d)| theirs.contains(d.as_bytes())).map(|(e, _)| e.clone()).collect())
}

/// Sender side; learns only the receiver's set size.
pub async fn psi_sender<R: Rng + ?Sized>(ep: &Endpoint, receiver: PartyId, set: &PsiSet, rng: &mut R) -> Result<()> {
    let b = random_scalar(rng);
    let req = decode_points(&ep.expect(receiver, tags::PSI_BLIND_REQ).await?)?;
    let double: Vec<CompressedRistretto> =
        req.iter().map(|p| decompress(p).map(|q| (b * q).compress())).collect::<Result<_>>()?;
    let mut own: Vec<CompressedRistretto> = set.elements.iter().map(|e| (b * hash_to_group(e)).compress()).collect();
    own.sort_unstable_by(|x, y| x.as_bytes().cmp(y.as_bytes()));
    ep.send(receiver, tags::PSI_BLIND_RESP, encode_points(&double))?;
    ep.send(receiver, tags::PSI_BLIND_RESP, encode_points(&own))?;
    Ok(())
}

/// Runs one session on a fresh two-party network.
pub fn psi_run(receiver: &PsiSet, sender: &PsiSet, seed: u64) -> Result<(Vec<Vec<u8>>, Transcript)> {
    let (r_id, s_id) = (PartyId::ACTIVE, PartyId::passive(1));
    let net = Network::new(&[r_id, s_id], seed);
    let (r_ep, s_ep) = (net.endpoint(r_id), net.endpoint(s_id));
    let mut out = Vec::new();
    {
        let out = &mut out;
        let mut r_rng = ChaCha20Rng::seed_from_u64(seed);
        let mut s_rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5e4d_e75e);
        net.run::<PsiError>(vec![
            Box::pin(async move {
                *out = psi_receiver(&r_ep, s_id, receiver, &mut r_rng).await?;
                Ok(())
            }),
            Box::pin(async move { psi_sender(&s_ep, r_id, sender, &mut s_rng).await }),
        ])?;
    }
    Ok((out, net.transcript()))
}

/// Sorts ids by their digest, the order both parties index aligned rows in.
pub fn canonical_order(ids: &mut [String]) {
    ids.sort_by_cached_key(|id| id_hash(id.as_bytes()));
}

/// Active side of alignment: PSI as receiver, then ships the sorted digests.
pub async fn align_active<R: Rng + ?Sized>(ep: &Endpoint, peer: PartyId, ids: &[String], rng: &mut R) -> Result<Vec<String>> {
    let set = PsiSet::new(ids)?;
    let common = psi_receiver(ep, peer, &set, rng).await?;
    let mut common: Vec<String> = common.into_iter().map(|e| String::from_utf8(e).expect("ids are utf-8")).collect();
    canonical_order(&mut common);
    let digests: Vec<u8> = common.iter().flat_map(|id| id_hash(id.as_bytes())).collect();
    ep.send(peer, tags::PSI_ALIGN_RESULT, digests)?;
    if common.is_empty() {
        return Err(PsiError::EmptyIntersection);
    }
    Ok(common)
}

/// Passive side of alignment.
pub async fn align_passive<R: Rng + ?Sized>(ep: &Endpoint, peer: PartyId, ids: &[String], rng: &mut R) -> Result<Vec<String>> {
    let set = PsiSet::new(ids)?;
    psi_sender(ep, peer, &set, rng).await?;
    let digests = ep.expect(peer, tags::PSI_ALIGN_RESULT).await?;
    if digests.len() % 32 != 0 {
        return Err(PsiError::Decode("digest list is not a multiple of 32 bytes".into()));
    }
    let by_hash: BTreeMap<[u8; 32], &String> = ids.iter().map(|id| (id_hash(id.as_bytes()), id)).collect();
    let common = digests
        .chunks_exact(32)
        .map(|d| by_hash.get(d).map(|id| (*id).clone()).ok_or_else(|| PsiError::Decode("unknown id digest".into())))
        .collect::<Result<Vec<_>>>()?;
    if common.is_empty() {
        return Err(PsiError::EmptyIntersection);
    }
    Ok(common)
}

/// Aligns two id lists; both returned lists are equal and canonically ordered.
pub fn align_samples(ids_a: &[String], ids_b: &[String], seed: u64) -> Result<(Vec<String>, Vec<String>, Transcript)> {
    let (a_id, b_id) = (PartyId::ACTIVE, PartyId::passive(1));
    let net = Network::new(&[a_id, b_id], seed);
    let (a_ep, b_ep) = (net.endpoint(a_id), net.endpoint(b_id));
    let (mut out_a, mut out_b) = (Vec::new(), Vec::new());
    {
        let (oa, ob) = (&mut out_a, &mut out_b);
        let mut a_rng = ChaCha20Rng::seed_from_u64(seed);
        let mut b_rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5e4d_e75e);
        net.run::<PsiError>(vec![
            Box::pin(async move {
                *oa = align_active(&a_ep, b_id, ids_a, &mut a_rng).await?;
                Ok(())
            }),
            Box::pin(async move {
                *ob = align_passive(&b_ep, a_id, ids_b, &mut b_rng).await?;
                Ok(())
            }),
        ])?;
    }
    Ok((out_a, out_b, net.transcript()))
}
