import json

import pandas as pd
import pytest

from utils.file_validation import FileValidation
from utils.geo import GeoCoord, haversine_km, propagation_delay_s
from utils.report_writer import flatten_dict, read_json, to_json_text, write_csv, write_json
from utils.seeding import derive_seed


def test_haversine_one_degree_of_latitude():
    assert haversine_km(GeoCoord(0.0, 0.0), GeoCoord(1.0, 0.0)) == pytest.approx(111.195, abs=0.01)


def test_haversine_is_symmetric_and_zero_on_same_point():
    a, b = GeoCoord(52.27, 10.52), GeoCoord(50.11, 8.68)
    assert haversine_km(a, b) == pytest.approx(haversine_km(b, a))
    assert haversine_km(a, a) == 0.0


def test_propagation_delay_uses_two_thirds_of_light_speed():
    a, b = GeoCoord(0.0, 0.0), GeoCoord(0.0, 1.0)
    km = haversine_km(a, b)
    assert propagation_delay_s(a, b) == pytest.approx(km / 199_861.638, rel=1e-6)


def test_antipodal_delay():
    delay = propagation_delay_s(GeoCoord(0.0, 0.0), GeoCoord(0.0, 180.0))
    assert delay == pytest.approx(0.1001, abs=1e-4)


def test_derive_seed_is_stable_and_label_sensitive():
    assert derive_seed(1, 'flows', 's0') == derive_seed(1, 'flows', 's0')
    assert derive_seed(1, 'flows', 's0') != derive_seed(1, 'flows', 's1')
    assert derive_seed(1, 'a') != derive_seed(2, 'a')
    assert 0 <= derive_seed(7, 'x') < 2 ** 63


def test_derive_seed_treats_numpy_integers_like_ints():
    np = pytest.importorskip('numpy')
    assert derive_seed(np.int64(3), 'x') == derive_seed(3, 'x')


def test_flatten_dict_joins_keys_and_keeps_lists_in_one_cell():
    flat = flatten_dict({'a': {'b': 1, 'c': {'d': 2}}, 'e': [1, 2]})
    assert flat == {'a_b': 1, 'a_c_d': 2, 'e': '[1, 2]'}


def test_json_text_is_sorted_and_rejects_nan():
    assert to_json_text({'b': 1, 'a': 2}).index('"a"') < to_json_text({'b': 1, 'a': 2}).index('"b"')
    with pytest.raises(ValueError):
        to_json_text({'x': float('nan')})


def test_write_json_and_csv(tmp_path):
    path = write_json(tmp_path / 'nested' / 'doc.json', {'k': [1, 2]})
    assert read_json(path) == {'k': [1, 2]}
    csv_path = write_csv(tmp_path / 'rows.csv', [{'a': 1, 'b': {'c': 2}}], ['a', 'b_c', 'missing'])
    frame = pd.read_csv(csv_path)
    assert list(frame.columns) == ['a', 'b_c', 'missing']
    assert frame.loc[0, 'b_c'] == 2


def test_validate_input_file_names_missing_path(tmp_path):
    missing = tmp_path / 'nope.json'
    ok, error = FileValidation.validate_input_file(missing, 'topology')
    assert not ok
    assert str(missing) in error


def test_validate_input_file_rejects_directories_and_empty_files(tmp_path):
    ok, _ = FileValidation.validate_input_file(tmp_path, 'dataset')
    assert not ok
    empty = tmp_path / 'empty.json'
    empty.write_text('')
    ok, error = FileValidation.validate_input_file(empty, 'dataset')
    assert not ok and 'empty' in error


def test_load_json_file_reports_syntax_errors(tmp_path):
    bad = tmp_path / 'bad.json'
    bad.write_text('{not json')
    ok, document, error = FileValidation.load_json_file(bad, 'config')
    assert not ok and document is None
    assert 'not valid JSON' in error

    good = tmp_path / 'good.json'
    good.write_text(json.dumps({'seed': 3}))
    assert FileValidation.load_json_file(good) == (True, {'seed': 3}, None)
