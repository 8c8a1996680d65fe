"""Import the compiled isic_engine module and exercise each binding once.

Usage: python smoke_test.py [path/to/dir/containing/isic_engine.so]
"""

import math
import os
import sys
import tempfile

if len(sys.argv) > 1:
    sys.path.insert(0, sys.argv[1])

import isic_engine as ie

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "..", "..", "..", "data")


def main():
    tax = ie.Taxonomy.from_file(os.path.join(DATA, "table1.csv"))
    assert len(tax) == 4
    assert tax.ancestors("4311") == ["431", "43", "F"]
    assert tax.describe("4311") == "Demolition"
    assert ie.division_of("4311") == "43"

    p = ie.HashingProvider(8)
    assert p.provider_id == "hashing:8"
    assert p.embed("aa") == [0.0] * 7 + [1.0]
    assert abs(ie.cosine_similarity([1.0, 0.0], [1.0, 1.0]) - 1 / math.sqrt(2)) < 1e-12

    r = ie.classification_report(["4311", "4312", "4312"], ["4311", "4311", "4312"], ["4311", "4312"])
    assert abs(r["accuracy"] - 2 / 3) < 1e-12
    assert abs(r["precision_weighted"] - 5 / 6) < 1e-12
    print(r["headline"], end="")

    head = ie.Head.train(
        [[1.0, 0.0], [0.0, 1.0]] * 20, ["4311", "4312"] * 20, ["4311", "4312"], learning_rate=0.1, epochs=20
    )
    assert abs(head.step_losses[0] - math.log(2)) < 1e-9
    assert abs(sum(head.forward([1.0, 0.0])) - 1.0) < 1e-12
    assert head.rank([1.0, 0.0], 1)[0][0] == "4311"

    try:
        ie.division_of("not a code")
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")

    with tempfile.TemporaryDirectory() as out:
        bundle_dir = ie.run_pipeline(os.path.join(DATA, "sample.toml"), output=out)
        bundle = ie.Bundle.load(bundle_dir)
        top = bundle.classify("demolition of old buildings", 3)
        assert len(top) == 3
        assert top[0][1] >= top[1][1] >= top[2][1]
        report = bundle.evaluate(os.path.join(DATA, "activities.csv"))
        assert 0.0 <= report["accuracy"] <= 1.0
        print("bundle", bundle.version, "winner", bundle.provider_id, "top", top[0][0])

    print("smoke test passed")


if __name__ == "__main__":
    main()
