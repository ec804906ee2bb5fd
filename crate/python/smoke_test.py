"""Smoke test for the simloop extension module.

Build and install first:
    maturin develop -m crates/py/Cargo.toml
then run:
    python python/smoke_test.py
"""

import pathlib

import simloop

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "crates" / "core" / "fixtures"


def main():
    kb = simloop.KnowledgeBase.bundled()
    assert "generate_data" in kb.functions
    assert "RR_KPC" in kb.methods
    assert len(kb) > 0

    loaded = simloop.KnowledgeBase.load(FIXTURES)
    assert loaded.options == kb.options

    code = "data = generate_data('case14');\nmodel = train(data, 'rr_kpc', 'RR_KPC.fixSeed', 1);"
    calls = simloop.parse_script(code)
    assert [c["function"] for c in calls] == ["generate_data", "train"]

    fixed, fixes = simloop.autocorrect(kb, code)
    assert "'RR_KPC'" in fixed and "true" in fixed
    assert {f["rule"] for f in fixes} == {"case_normalize", "flag_coercion"}
    assert simloop.validate(kb, fixed) == []

    issues = simloop.validate(kb, "data = generate_data('case14', 'plot.theme', 'academic');")
    assert issues and issues[0]["kind"] == "option_function_mismatch"

    outcome = simloop.execute(kb, fixed)
    assert outcome["status"] == "success", outcome

    tasks = {t["id"]: t for t in simloop.tasks(kb)}
    assert len(tasks) == 34
    n20 = tasks["normal-20"]
    assert simloop.score(kb, n20["canonical"], n20["canonical"]) == 1.0
    assert simloop.score(kb, "data = generate_data('case14');", n20["canonical"]) == 0.0

    assert simloop.accuracy(98, 34) == 96.08
    assert simloop.fill_untriggered([0.0, 1.0]) == [0.0, 1.0, 1.0]
    try:
        simloop.fill_untriggered([])
    except ValueError:
        pass
    else:
        raise AssertionError("empty attempt list accepted")

    replay = FIXTURES / "replay" / "trajectories" / "fail_then_fix.replay"
    transcript = simloop.run_session(kb, n20["request"], replay)
    outcomes = [a["outcome"] for a in transcript["attempts"]]
    assert outcomes == ["validate_fail", "success"], outcomes
    assert transcript["final_status"] == "success"

    try:
        simloop.parse_script("data = generate_data(")
    except ValueError:
        pass
    else:
        raise AssertionError("bad script parsed")

    print("smoke test passed")


if __name__ == "__main__":
    main()
