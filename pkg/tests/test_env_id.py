import numpy as np
import pytest

from macad_env_id import (
    DEFAULT_REGISTRY,
    AgentNature,
    CommNature,
    EnvId,
    EnvRegistry,
    EnvSpec,
    Flag,
    MapType,
    Multiplicity,
    Observability,
    TaskNature,
    format_env_id,
    list_envs,
    parse_env_id,
    register,
)
from macad_errors import DuplicateId, EmptyUsid, MissingVersion, UnknownEnvId, UnknownToken

LISTED_NAMES = [
    "HeteCommCoopPOUrbanMAEnv-v0",
    "HomoNcomIndePOIntrxMASS3CTwn3-v0",
    "HeteCommIndePOIntrxMAEnv-v0",
    "HomoNcomIndeFOHiwaySynchMAEnv-v0",
    "HomoCommCompFORuralAdvrsAsyncMgoalSynchSAx9-v12",
]


def test_parse_reference_name():
    parsed = parse_env_id("HomoNcomIndePOIntrxMASS3CTwn3-v0")
    assert parsed.agent_nature is AgentNature.HOMO
    assert parsed.comm_nature is CommNature.NCOM
    assert parsed.task_nature is TaskNature.INDE
    assert parsed.observability is Observability.PO
    assert parsed.map_type is MapType.INTRX
    assert parsed.flags == ()
    assert parsed.multiplicity is Multiplicity.MA
    assert parsed.usid == "SS3CTwn3"
    assert parsed.version == 0


def test_parse_flags_and_to_json():
    parsed = parse_env_id("HomoNcomIndeFOHiwaySynchMAEnv-v0")
    assert parsed.flags == (Flag.SYNCH,)
    assert parsed.to_json()["flags"] == ["Synch"]
    assert parsed.to_json()["map_type"] == "Hiway"


@pytest.mark.parametrize("name", LISTED_NAMES)
def test_listed_names_round_trip(name):
    assert format_env_id(parse_env_id(name)) == name


def _random_env_id(rng: np.random.Generator) -> str:
    def pick(enum_cls):
        members = list(enum_cls)
        return members[int(rng.integers(len(members)))].value

    flags = [f.value for f in Flag if rng.random() < 0.3]
    alphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
    usid = "".join(alphabet[int(i)] for i in rng.integers(len(alphabet), size=int(rng.integers(1, 12))))
    version = int(rng.integers(0, 1000))
    return "".join([
        pick(AgentNature), pick(CommNature), pick(TaskNature), pick(Observability), pick(MapType),
        *flags, pick(Multiplicity), usid, f"-v{version}",
    ])


def test_random_names_round_trip():
    rng = np.random.default_rng(7)
    for _ in range(10_000):
        name = _random_env_id(rng)
        assert format_env_id(parse_env_id(name)) == name


def test_env_id_canonicalizes_flag_order():
    env_id = EnvId(AgentNature.HOMO, CommNature.COMM, TaskNature.COOP, Observability.PO, MapType.URBAN,
                   (Flag.SYNCH, Flag.ADVRS), Multiplicity.MA, "Env", 1)
    assert env_id.flags == (Flag.ADVRS, Flag.SYNCH)
    assert str(env_id) == "HomoCommCoopPOUrbanAdvrsSynchMAEnv-v1"


@pytest.mark.parametrize(
    "name, position",
    [
        ("HomoXcomIndePOIntrxMASS3CTwn3-v0", 4),
        ("HomoNcomIndeXXIntrxMASS3CTwn3-v0", 12),
        ("HomoNcomIndePOStreeMASS3CTwn3-v0", 14),
        ("HomoNcomIndePOIntrxAsyncAdvrsMAEnv-v0", 24),
        ("HomoNcomIndePOIntrxSynchSynchMAEnv-v0", 24),
        ("HomoNcomIndePOIntrxFooMAEnv-v0", 19),
        ("HomoNcomIndePOIntrxMASS_3C-v0", 23),
        ("HomoNcomIndePOIntrxMAEnv-v01", 26),
    ],
)
def test_unknown_token_reports_position(name, position):
    with pytest.raises(UnknownToken) as err:
        parse_env_id(name)
    assert err.value.position == position
    assert err.value.to_json()["kind"] == "UnknownToken"
    assert err.value.exit_status == 2


def test_empty_name_is_unknown_token():
    with pytest.raises(UnknownToken):
        parse_env_id("")


@pytest.mark.parametrize("name", ["HomoNcomIndePOIntrxMASS3CTwn3", "HomoNcomIndePOIntrxMASS3CTwn3-v", "HomoNcomIndePOIntrxMAEnv-vx"])
def test_missing_version(name):
    with pytest.raises(MissingVersion):
        parse_env_id(name)


def test_empty_usid():
    with pytest.raises(EmptyUsid):
        parse_env_id("HomoNcomIndePOIntrxMA-v0")


def test_registry_register_and_lookup():
    registry = EnvRegistry()
    spec = EnvSpec("SSUI1C_TOWN3")
    register(registry, "HomoNcomIndePOIntrxSAOne-v0", spec)
    assert registry.lookup("HomoNcomIndePOIntrxSAOne-v0") is spec
    assert registry.lookup(parse_env_id("HomoNcomIndePOIntrxSAOne-v0")) is spec
    assert "HomoNcomIndePOIntrxSAOne-v0" in registry
    assert len(registry) == 1


def test_registry_rejects_duplicates():
    registry = EnvRegistry()
    registry.register("HomoNcomIndePOIntrxSAOne-v0", EnvSpec("SSUI1C_TOWN3"))
    with pytest.raises(DuplicateId):
        registry.register("HomoNcomIndePOIntrxSAOne-v0", EnvSpec("SSUI3C_TOWN3"))


def test_registry_unknown_id():
    with pytest.raises(UnknownEnvId):
        EnvRegistry().lookup("HomoNcomIndePOIntrxSAOne-v0")


def test_default_registry_contents():
    names = list_envs(DEFAULT_REGISTRY)
    assert names == sorted(names)
    assert "HomoNcomIndePOIntrxMASS3CTwn3-v0" in names
    assert "HomoNcomIndeFOIntrxMAGrid2C-v0" in names
    assert DEFAULT_REGISTRY.lookup("HomoNcomIndeFOIntrxMAGrid2C-v0").kind == "grid"


def test_list_envs_filters():
    fully_observable = list_envs(DEFAULT_REGISTRY, {"observability": "FO"})
    assert fully_observable == sorted(["HomoNcomIndeFOHiwaySynchMAEnv-v0", "HomoNcomIndeFOIntrxMAGrid2C-v0"])
    assert list_envs(DEFAULT_REGISTRY, {"flags": ["Async"]}) == ["HomoNcomIndePOIntrxAsyncMASS3CTwn3-v0"]
    assert list_envs(DEFAULT_REGISTRY, {"multiplicity": "SA"}) == ["HomoNcomIndePOIntrxSASS1CTwn3-v0"]
    assert list_envs(DEFAULT_REGISTRY, {"comm_nature": "Comm", "task_nature": "Coop"}) == ["HeteCommCoopPOUrbanMAEnv-v0"]
    assert list_envs(DEFAULT_REGISTRY, {"task_nature": "Comp"}) == ["HomoNcomCompPOIntrxMASS3CTwn3-v0"]
    assert list_envs(DEFAULT_REGISTRY, {"task_nature": "Mixd"}) == ["HomoNcomMixdPOIntrxMASS3CTwn3-v0"]
    assert list_envs(DEFAULT_REGISTRY, {"flags": ["Mgoal"]}) == ["HomoNcomIndePOIntrxMgoalMASS3CTwn3-v0"]


def test_list_envs_unknown_attribute():
    with pytest.raises(ValueError):
        list_envs(DEFAULT_REGISTRY, {"colour": "red"})


def test_task_nature_presets_match_registrations():
    comp = DEFAULT_REGISTRY.lookup("HomoNcomCompPOIntrxMASS3CTwn3-v0")
    mixed = DEFAULT_REGISTRY.lookup("HomoNcomMixdPOIntrxMASS3CTwn3-v0")
    assert {block["reward_function"] for block in comp.actors.values()} == {"corl2017_comp"}
    assert {block["reward_function"] for block in mixed.actors.values()} == {"corl2017_mixed"}
    assert {name: block["team"] for name, block in mixed.actors.items()} == {"car1": "red", "car2": "red", "car3": "blue"}
