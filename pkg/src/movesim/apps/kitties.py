"""Collectible-breeding game where every cat is its own movable contract.

A per-chain game contract mints promotional cats; cats breed to produce new
cat contracts. Breeding is the only operation that can span chains: the
sire must first be moved to the dam's chain. Cats identify prospective
mates by genes, which are unique per cat and known before the mate's
contract exists, so siring approvals never depend on creation order.
"""

from __future__ import annotations

from typing import Optional

from ..hashing import DEFAULT_ALGO, digest
from ..proofs import be
from ..vm import (
    Behavior,
    ContractRecord,
    GenesisContext,
    addr32,
    behavior_code_hash,
    derive_address,
    r32,
    r_addr,
    skey,
    w32,
)

GAME_NAME = "kitties-game"
CAT_NAME = "kitties-cat"
GAME_CODE_SIZE = 4000
CAT_CODE_SIZE = 2200

GAME_CODE_HASH = behavior_code_hash(GAME_NAME)
CAT_CODE_HASH = behavior_code_hash(CAT_NAME)

K_GAME_OWNER = skey("game.owner")
K_PROMO_COUNT = skey("game.promo_count")

K_OWNER = skey("cat.owner")
K_GENES = skey("cat.genes")
K_PARENT_A = skey("cat.parent_a")
K_PARENT_B = skey("cat.parent_b")
K_SIRE_OK = skey("cat.sire_approved_genes")
K_PREGNANT = skey("cat.pregnant_with")
K_BIRTHS = skey("cat.births")

ZERO_WORD = b"\x00" * 32


def mix_genes(a: bytes, b: bytes, seed: bytes, algo: str = DEFAULT_ALGO) -> bytes:
    """Child genes from both parents and a seed; order-sensitive."""
    return digest(a + b + seed, algo)[:32]


def birth_seed(dam_genes: bytes, sire_genes: bytes, birth_index: int, algo: str = DEFAULT_ALGO) -> bytes:
    """Deterministic per-litter seed, reproducible regardless of block layout."""
    return digest(b"litter:" + dam_genes + sire_genes + be(birth_index, 8), algo)


def child_genes(dam_genes: bytes, sire_genes: bytes, birth_index: int, algo: str = DEFAULT_ALGO) -> bytes:
    return mix_genes(dam_genes, sire_genes, birth_seed(dam_genes, sire_genes, birth_index, algo), algo)


# Game -------------------------------------------------------------------------

def _game_constructor(ctx, args):
    (owner,) = args
    ctx.put(K_GAME_OWNER, addr32(owner))
    ctx.put(K_PROMO_COUNT, w32(0))


def _game_create_promo(ctx, args):
    owner, genes = args
    if ctx.origin != r_addr(ctx.get(K_GAME_OWNER)):
        ctx.abort("NotOwner")
    count = r32(ctx.get(K_PROMO_COUNT))
    ctx.put(K_PROMO_COUNT, w32(count + 1))
    cat = ctx.create(CAT_CODE_HASH, w32(count), (owner, genes, None, None))
    ctx.emit("CatCreated", cat=cat.hex(), genes=genes.hex(), owner=owner.hex())
    return cat


def game_behavior() -> Behavior:
    return Behavior(
        name=GAME_NAME,
        code_size=GAME_CODE_SIZE,
        constructor=_game_constructor,
        methods={"create_promo": _game_create_promo},
    )


# Cat ---------------------------------------------------------------------------

def _cat_constructor(ctx, args):
    owner, genes, parent_a, parent_b = args
    ctx.put(K_OWNER, addr32(owner))
    ctx.put(K_GENES, genes)
    ctx.put(K_PARENT_A, addr32(parent_a) if parent_a else ZERO_WORD)
    ctx.put(K_PARENT_B, addr32(parent_b) if parent_b else ZERO_WORD)
    ctx.put(K_SIRE_OK, ZERO_WORD)
    ctx.put(K_PREGNANT, ZERO_WORD)
    ctx.put(K_BIRTHS, w32(0))


def _cat_approve_siring(ctx, args):
    (mate_genes,) = args
    if ctx.origin != r_addr(ctx.get(K_OWNER)):
        ctx.abort("NotOwner")
    ctx.put(K_SIRE_OK, mate_genes)
    ctx.emit("SiringApproved", mate_genes=mate_genes.hex())
    return True


def _parents(record_storage_get) -> tuple[Optional[bytes], Optional[bytes]]:
    return r_addr(record_storage_get(K_PARENT_A)), r_addr(record_storage_get(K_PARENT_B))


def _forbidden_mating(ctx, dam_addr, dam_parents, sire_addr, sire_parents) -> bool:
    if dam_addr == sire_addr:
        return True
    shared = {p for p in dam_parents if p} & {p for p in sire_parents if p}
    if shared:
        return True  # siblings, full or half
    if sire_addr in dam_parents or dam_addr in sire_parents:
        return True  # parent with child
    return False


def _cat_breed_with(ctx, args):
    """Run on the dam; the sire must be active on the same chain."""
    (sire_addr,) = args
    if ctx.origin != r_addr(ctx.get(K_OWNER)):
        ctx.abort("NotOwner")
    if r_addr(ctx.get(K_PREGNANT)) is not None:
        ctx.abort("AlreadyPregnant")
    sire = ctx.read_record(sire_addr)
    if sire is None:
        ctx.abort("NoSuchContract")
    if sire.location != ctx.chain_id:
        ctx.abort("ContractMoved")
    dam_parents = _parents(ctx.get)
    sire_parents = _parents(sire.storage.get)
    if _forbidden_mating(ctx, ctx.self_address, dam_parents, sire_addr, sire_parents):
        ctx.abort("ForbiddenMating")
    ctx.call(sire_addr, "consume_siring", (ctx.get(K_GENES),))
    ctx.put(K_PREGNANT, addr32(sire_addr))
    ctx.emit("Bred", sire=sire_addr.hex())
    return True


def _cat_consume_siring(ctx, args):
    """Run on the sire from the dam's breed call; authorizes and clears approval."""
    (dam_genes,) = args
    caller = ctx.read_record(ctx.sender)
    if caller is None or caller.code_hash != CAT_CODE_HASH:
        ctx.abort("BadOrigin")
    if caller.storage.get(K_GENES) != dam_genes:
        ctx.abort("BadOrigin")
    approved = ctx.get(K_SIRE_OK)
    if approved != dam_genes and ctx.origin != r_addr(ctx.get(K_OWNER)):
        ctx.abort("SiringNotApproved")
    ctx.put(K_SIRE_OK, ZERO_WORD)
    return True


def _cat_give_birth(ctx, args):
    if ctx.origin != r_addr(ctx.get(K_OWNER)):
        ctx.abort("NotOwner")
    sire_addr = r_addr(ctx.get(K_PREGNANT))
    if sire_addr is None:
        ctx.abort("NotPregnant")
    sire = ctx.read_record(sire_addr)  # genes are immutable, a blocked record is fine
    dam_genes = ctx.get(K_GENES)
    sire_genes = sire.storage.get(K_GENES)
    births = r32(ctx.get(K_BIRTHS))
    genes = child_genes(dam_genes, sire_genes, births, _ctx_algo(ctx))
    owner = r_addr(ctx.get(K_OWNER))
    kitten = ctx.create(
        CAT_CODE_HASH, w32(births), (owner, genes, ctx.self_address, sire_addr)
    )
    ctx.put(K_BIRTHS, w32(births + 1))
    ctx.put(K_PREGNANT, ZERO_WORD)
    ctx.emit("CatBorn", cat=kitten.hex(), genes=genes.hex(), owner=owner.hex())
    return kitten


def _ctx_algo(ctx) -> str:
    frame = getattr(ctx, "_frame", None)
    if frame is not None:
        return frame.chain.algo
    return DEFAULT_ALGO


def _cat_move_to(ctx, args):
    if ctx.sender != r_addr(ctx.get(K_OWNER)):
        ctx.abort("NotOwner")


def cat_behavior() -> Behavior:
    return Behavior(
        name=CAT_NAME,
        code_size=CAT_CODE_SIZE,
        constructor=_cat_constructor,
        methods={
            "approve_siring": _cat_approve_siring,
            "breed_with": _cat_breed_with,
            "consume_siring": _cat_consume_siring,
            "give_birth": _cat_give_birth,
        },
        move_to=_cat_move_to,
    )


# Read-only views ---------------------------------------------------------------

def cat_owner(record: ContractRecord) -> Optional[bytes]:
    return r_addr(record.storage.get(K_OWNER))


def cat_genes(record: ContractRecord) -> bytes:
    return record.storage.get(K_GENES, ZERO_WORD)


def cat_parents(record: ContractRecord) -> tuple[Optional[bytes], Optional[bytes]]:
    return _parents(record.storage.get)


def cat_pregnant_with(record: ContractRecord) -> Optional[bytes]:
    return r_addr(record.storage.get(K_PREGNANT))


# Genesis allocation helpers -----------------------------------------------------

def genesis_game(chain_id: int, deployer: bytes, owner: bytes, salt: bytes,
                 promo_count: int = 0, algo: str = DEFAULT_ALGO) -> ContractRecord:
    address = derive_address(chain_id, deployer, salt, GAME_CODE_HASH, algo)
    rec = ContractRecord(address, GAME_CODE_HASH, {}, 0, 0, chain_id, salt)
    ctx = GenesisContext(rec, chain_id, deployer)
    _game_constructor(ctx, (owner,))
    ctx.put(K_PROMO_COUNT, w32(promo_count))
    return rec


def genesis_cat(chain_id: int, game_address: bytes, salt_index: int, owner: bytes,
                genes: bytes, algo: str = DEFAULT_ALGO) -> ContractRecord:
    salt = w32(salt_index)
    address = derive_address(chain_id, game_address, salt, CAT_CODE_HASH, algo)
    rec = ContractRecord(address, CAT_CODE_HASH, {}, 0, 0, chain_id, salt)
    ctx = GenesisContext(rec, chain_id, game_address)
    _cat_constructor(ctx, (owner, genes, None, None))
    return rec
