import pytest
from hypothesis import given
from hypothesis import strategies as st

from smartconn.cloud_sim import FaultPlan, SimulatedProvider
from smartconn.core_model import InvalidDefinition, OutcomeKind, SweepSpec, UserReqVM
from smartconn.sc_engine import Env
from smartconn.sweep import Binding, expand_sweep, launch_sweep

from support import simple_definition

REQ = UserReqVM(2, 1)


def scripted_env_factory(plans=None):
    """One fresh provider per binding; plans maps binding index -> FaultPlan."""
    plans = plans or {}

    def factory(i, binding):
        return Env(SimulatedProvider(plans.get(i, FaultPlan.scripted())))

    return factory


# ---------------------------------------------------------------------------
# expansion


def test_empty_spec_expands_to_a_single_empty_binding():
    assert expand_sweep(SweepSpec()) == [Binding("binding-0000", {})]


def test_two_variable_product_in_name_major_order():
    spec = SweepSpec({"p": ["a", "b"], "T": [1, 2, 3]})
    bindings = expand_sweep(spec)
    assert len(bindings) == 6
    # T sorts before p, so T varies slowest
    assert [b.values for b in bindings] == [
        {"T": 1, "p": "a"},
        {"T": 1, "p": "b"},
        {"T": 2, "p": "a"},
        {"T": 2, "p": "b"},
        {"T": 3, "p": "a"},
        {"T": 3, "p": "b"},
    ]
    assert bindings[0].binding_id == "binding-0000"
    assert bindings[5].binding_id == "binding-0005"


def test_value_order_within_a_variable_is_preserved_not_sorted():
    bindings = expand_sweep(SweepSpec({"T": [3, 1, 2]}))
    assert [b.values["T"] for b in bindings] == [3, 1, 2]


@given(
    st.dictionaries(
        st.sampled_from(["a", "b", "c"]),
        st.lists(st.integers(min_value=0, max_value=5), min_size=1, max_size=4),
        max_size=3,
    )
)
def test_expansion_cardinality_is_the_product_of_list_lengths(variables):
    expected = 1
    for values in variables.values():
        expected *= len(values)
    bindings = expand_sweep(SweepSpec(variables))
    assert len(bindings) == expected
    assert len({b.binding_id for b in bindings}) == expected


# ---------------------------------------------------------------------------
# launching


def test_twelve_bindings_run_twelve_jobs():
    defn = simple_definition(sweep=SweepSpec({"T": [1, 2, 3], "p": [0.1, 0.2, 0.3, 0.4]}))
    jobs = launch_sweep(defn, {"x0": 1.0}, REQ, scripted_env_factory())
    assert len(jobs) == 12
    assert len({j.job_id for j in jobs}) == 12
    assert all(j.outcome.kind is OutcomeKind.SUCCESS for j in jobs)


def test_binding_values_override_the_base_input():
    defn = simple_definition(sweep=SweepSpec({"x0": [2.0, 3.0]}))
    jobs = launch_sweep(defn, {"x0": 1.0, "other": 9}, REQ, scripted_env_factory())
    assert [j.data_input["x0"] for j in jobs] == [2.0, 3.0]
    assert all(j.data_input["other"] == 9 for j in jobs)


def test_one_failing_binding_does_not_stop_the_rest():
    defn = simple_definition(sweep=SweepSpec({"T": [1, 2, 3]}))
    plans = {1: FaultPlan.scripted(create_vm=[False] * 6)}
    jobs = launch_sweep(defn, {"x0": 1.0}, REQ, scripted_env_factory(plans))
    outcomes = [j.outcome.kind for j in jobs]
    assert outcomes == [OutcomeKind.SUCCESS, OutcomeKind.VM_FAILED, OutcomeKind.SUCCESS]


def test_bindings_are_isolated_one_provider_each():
    defn = simple_definition(sweep=SweepSpec({"T": [1, 2]}))
    envs = []

    def factory(i, binding):
        env = Env(SimulatedProvider(FaultPlan.scripted()))
        envs.append(env)
        return env

    launch_sweep(defn, {"x0": 1.0}, REQ, factory)
    assert len(envs) == 2
    assert envs[0].provider is not envs[1].provider
    # each provider only ever created its own job's pool
    assert all(len(e.provider.created_vm_ids()) == 2 for e in envs)


def test_launch_validates_the_definition_before_running_anything():
    defn = simple_definition(sweep=SweepSpec({"T": []}))
    calls = []

    def factory(i, binding):
        calls.append(i)
        return Env(SimulatedProvider(FaultPlan.scripted()))

    with pytest.raises(InvalidDefinition):
        launch_sweep(defn, {"x0": 1.0}, REQ, factory)
    assert calls == []
