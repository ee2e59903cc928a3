import hashlib
import random

from conftest import Net, ident
from movesim import vm
from movesim.apps import kitties
from movesim.vm import derive_address


def kitties_net(n=2):
    owner = ident("game-owner")
    net = Net(n=n)
    receipt = net.create(0, owner, kitties.GAME_CODE_HASH, bytes(32), (owner,))
    assert receipt.ok
    game = derive_address(0, owner, bytes(32), kitties.GAME_CODE_HASH)
    return net, owner, game


def promo(net, game, game_owner, cat_owner, genes):
    receipt = net.call(0, game_owner, game, "create_promo", (cat_owner, genes))
    assert receipt.ok, receipt.reason
    return bytes.fromhex(dict(receipt.events)["CatCreated"]["cat"])


def genes_of(tag):
    return hashlib.sha256(b"genes:" + tag.encode()).digest()


def test_mix_genes_golden_and_properties():
    a, b, seed = bytes([1]) * 32, bytes([2]) * 32, bytes([3]) * 32
    mixed = kitties.mix_genes(a, b, seed)
    assert mixed.hex() == "8a2e491356cfdb05a1d13785e0794d7cd163f91af79a146c976b1d2ac643b679"
    assert mixed == hashlib.sha256(a + b + seed).digest()
    assert kitties.mix_genes(a, b, seed) == kitties.mix_genes(a, b, seed)
    assert kitties.mix_genes(a, b, seed) != kitties.mix_genes(b, a, seed)


def test_promo_cat_created_by_owner_only():
    net, owner, game = kitties_net()
    cat = promo(net, game, owner, ident("alice"), genes_of("a"))
    record = net[0].read_record(cat)
    assert kitties.cat_owner(record) == ident("alice")
    assert kitties.cat_parents(record) == (None, None)
    refused = net.call(0, ident("mallory"), game, "create_promo", (ident("m"), genes_of("m")))
    assert refused.reason == "NotOwner"


def test_promo_cat_creation_pays_contract_creation_gas():
    net, owner, game = kitties_net()
    receipt = net.call(0, owner, game, "create_promo", (ident("alice"), genes_of("g")))
    assert receipt.ok
    assert receipt.gas_used >= 21000 + 32000


def test_approve_siring_owner_only_and_overwrite():
    net, owner, game = kitties_net()
    bob = ident("bob")
    cat = promo(net, game, owner, bob, genes_of("b"))
    refused = net.call(0, ident("mallory"), cat, "approve_siring", (genes_of("x"),))
    assert refused.reason == "NotOwner"
    assert net.call(0, bob, cat, "approve_siring", (genes_of("x"),)).ok
    assert net.call(0, bob, cat, "approve_siring", (genes_of("y"),)).ok
    assert net[0].read_record(cat).storage[kitties.K_SIRE_OK] == genes_of("y")


def breed_and_birth(net, dam, sire, dam_owner):
    receipt = net.call(0, dam_owner, dam, "breed_with", (sire,))
    assert receipt.ok, receipt.reason
    birth = net.call(0, dam_owner, dam, "give_birth", ())
    assert birth.ok, birth.reason
    return bytes.fromhex(dict(birth.events)["CatBorn"]["cat"])


def test_same_owner_pair_breeds_without_approval():
    net, owner, game = kitties_net()
    alice = ident("alice")
    dam = promo(net, game, owner, alice, genes_of("dam"))
    sire = promo(net, game, owner, alice, genes_of("sire"))
    child = breed_and_birth(net, dam, sire, alice)
    record = net[0].read_record(child)
    assert kitties.cat_parents(record) == (dam, sire)
    assert kitties.cat_owner(record) == alice
    assert kitties.cat_pregnant_with(net[0].read_record(dam)) is None


def test_foreign_sire_requires_approval():
    net, owner, game = kitties_net()
    alice, bob = ident("alice"), ident("bob")
    dam = promo(net, game, owner, alice, genes_of("dam"))
    sire = promo(net, game, owner, bob, genes_of("sire"))
    refused = net.call(0, alice, dam, "breed_with", (sire,))
    assert refused.reason == "SiringNotApproved"
    assert net.call(0, bob, sire, "approve_siring", (genes_of("dam"),)).ok
    assert net.call(0, alice, dam, "breed_with", (sire,)).ok
    # approval is consumed by the breeding
    again = net.call(0, alice, dam, "give_birth", ())
    assert again.ok
    refused = net.call(0, alice, dam, "breed_with", (sire,))
    assert refused.reason == "SiringNotApproved"


def test_child_genes_reproducible_from_parent_genes_and_birth_index():
    net, owner, game = kitties_net()
    alice = ident("alice")
    dam = promo(net, game, owner, alice, genes_of("dam"))
    sire = promo(net, game, owner, alice, genes_of("sire"))
    child = breed_and_birth(net, dam, sire, alice)
    expected = kitties.child_genes(genes_of("dam"), genes_of("sire"), 0)
    assert kitties.cat_genes(net[0].read_record(child)) == expected
    # second litter of the same pair gets different genes
    child2 = breed_and_birth(net, dam, sire, alice)
    expected2 = kitties.child_genes(genes_of("dam"), genes_of("sire"), 1)
    assert kitties.cat_genes(net[0].read_record(child2)) == expected2
    assert expected != expected2


def test_self_breeding_forbidden():
    net, owner, game = kitties_net()
    alice = ident("alice")
    cat = promo(net, game, owner, alice, genes_of("c"))
    receipt = net.call(0, alice, cat, "breed_with", (cat,))
    assert receipt.reason == "ForbiddenMating"


def test_sibling_breeding_forbidden():
    net, owner, game = kitties_net()
    alice = ident("alice")
    dam = promo(net, game, owner, alice, genes_of("dam"))
    sire = promo(net, game, owner, alice, genes_of("sire"))
    kid1 = breed_and_birth(net, dam, sire, alice)
    kid2 = breed_and_birth(net, dam, sire, alice)
    receipt = net.call(0, alice, kid1, "breed_with", (kid2,))
    assert receipt.reason == "ForbiddenMating"


def test_half_siblings_forbidden():
    net, owner, game = kitties_net()
    alice = ident("alice")
    dam = promo(net, game, owner, alice, genes_of("dam"))
    sire1 = promo(net, game, owner, alice, genes_of("s1"))
    sire2 = promo(net, game, owner, alice, genes_of("s2"))
    kid1 = breed_and_birth(net, dam, sire1, alice)
    kid2 = breed_and_birth(net, dam, sire2, alice)
    receipt = net.call(0, alice, kid1, "breed_with", (kid2,))
    assert receipt.reason == "ForbiddenMating"


def test_parent_child_breeding_forbidden_both_directions():
    net, owner, game = kitties_net()
    alice = ident("alice")
    dam = promo(net, game, owner, alice, genes_of("dam"))
    sire = promo(net, game, owner, alice, genes_of("sire"))
    kid = breed_and_birth(net, dam, sire, alice)
    assert net.call(0, alice, kid, "breed_with", (dam,)).reason == "ForbiddenMating"
    assert net.call(0, alice, dam, "breed_with", (kid,)).reason == "ForbiddenMating"


def test_grandparent_breeding_allowed():
    net, owner, game = kitties_net()
    alice = ident("alice")
    dam = promo(net, game, owner, alice, genes_of("dam"))
    sire = promo(net, game, owner, alice, genes_of("sire"))
    other = promo(net, game, owner, alice, genes_of("other"))
    kid = breed_and_birth(net, dam, sire, alice)
    grandkid = breed_and_birth(net, kid, other, alice)
    receipt = net.call(0, alice, grandkid, "breed_with", (dam,))
    assert receipt.ok, receipt.reason


def test_breed_with_sire_on_other_chain_aborts():
    net, owner, game = kitties_net()
    alice = ident("alice")
    dam = promo(net, game, owner, alice, genes_of("dam"))
    sire = promo(net, game, owner, alice, genes_of("sire"))
    net.move_contract(0, 1, sire, alice)
    receipt = net.call(0, alice, dam, "breed_with", (sire,))
    assert receipt.reason == vm.CONTRACT_MOVED


def test_give_birth_without_pregnancy_aborts():
    net, owner, game = kitties_net()
    alice = ident("alice")
    cat = promo(net, game, owner, alice, genes_of("c"))
    receipt = net.call(0, alice, cat, "give_birth", ())
    assert receipt.reason == "NotPregnant"


def test_breed_while_pregnant_aborts():
    net, owner, game = kitties_net()
    alice = ident("alice")
    dam = promo(net, game, owner, alice, genes_of("dam"))
    sire = promo(net, game, owner, alice, genes_of("sire"))
    other = promo(net, game, owner, alice, genes_of("other"))
    assert net.call(0, alice, dam, "breed_with", (sire,)).ok
    receipt = net.call(0, alice, dam, "breed_with", (other,))
    assert receipt.reason == "AlreadyPregnant"


def test_genealogy_fuzz_against_family_tree_oracle():
    """Random breeding attempts; a brute-force family tree decides which
    must be refused, and no cat may ever become its own ancestor."""
    net, owner, game = kitties_net()
    alice = ident("alice")
    cats = [promo(net, game, owner, alice, genes_of(f"p{i}")) for i in range(5)]
    parents = {cat: (None, None) for cat in cats}
    rng = random.Random(99)

    def oracle_forbidden(dam, sire):
        if dam == sire:
            return True
        dam_parents = {p for p in parents[dam] if p}
        sire_parents = {p for p in parents[sire] if p}
        if dam_parents & sire_parents:
            return True
        return sire in dam_parents or dam in sire_parents

    def ancestors(cat):
        out = set()
        stack = [p for p in parents[cat] if p]
        while stack:
            node = stack.pop()
            if node in out:
                continue
            out.add(node)
            stack.extend(p for p in parents[node] if p)
        return out

    births = 0
    for _ in range(120):
        dam, sire = rng.choice(cats), rng.choice(cats)
        receipt = net.call(0, alice, dam, "breed_with", (sire,))
        if oracle_forbidden(dam, sire):
            assert receipt.reason == "ForbiddenMating"
            continue
        assert receipt.ok, receipt.reason
        birth = net.call(0, alice, dam, "give_birth", ())
        assert birth.ok
        child = bytes.fromhex(dict(birth.events)["CatBorn"]["cat"])
        parents[child] = (dam, sire)
        cats.append(child)
        births += 1
    assert births > 10
    for cat in cats:
        assert cat not in ancestors(cat)
