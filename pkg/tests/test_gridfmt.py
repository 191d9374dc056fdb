import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esgrid.errors import ValidationError
from esgrid.gridfmt import (
    ConcatError,
    Constraint,
    ConstraintSyntaxError,
    Dimension,
    FormatError,
    GridDataset,
    Hyperslab,
    Projection,
    RankMismatchError,
    SlabBoundsError,
    UnknownVariableError,
    Variable,
    checksum,
    concat,
    parse_constraint,
    read_dataset,
    render_constraint,
    subset,
    write_dataset,
)

from .helpers import random_constraint, random_dataset, record_series, t1_dataset
from .oracles import (
    brute_concat_var,
    brute_subset_dataset,
    dataset_to_plain,
    slab_index_set,
)


class TestModel:
    def test_t1_is_valid(self):
        ds = t1_dataset()
        assert ds.record_dim().name == "time"
        assert ds.var_shape(ds.var("PS")) == [3, 2, 2]

    def test_duplicate_dimension_rejected(self):
        ds = GridDataset(dimensions=[Dimension("x", 1), Dimension("x", 2)])
        with pytest.raises(ValidationError):
            ds.validate()

    def test_two_unlimited_dims_rejected(self):
        ds = GridDataset(dimensions=[Dimension("t", 1, True), Dimension("u", 1, True)])
        with pytest.raises(ValidationError):
            ds.validate()

    def test_data_length_must_match_shape(self):
        ds = GridDataset(
            dimensions=[Dimension("x", 3)],
            variables=[Variable("v", ["x"], "f64", {}, [1.0, 2.0])],
        )
        with pytest.raises(ValidationError, match="data length"):
            ds.validate()

    def test_coordinate_variable_must_be_1d_over_its_dim(self):
        ds = GridDataset(
            dimensions=[Dimension("x", 2), Dimension("y", 2)],
            variables=[Variable("x", ["y"], "f64", {}, [0.0, 1.0])],
        )
        with pytest.raises(ValidationError, match="1-D"):
            ds.validate()

    def test_i64_rejects_floats(self):
        ds = GridDataset(
            dimensions=[Dimension("x", 1)],
            variables=[Variable("v", ["x"], "i64", {}, [1.5])],
        )
        with pytest.raises(ValidationError):
            ds.validate()


class TestConstraintParsing:
    def test_single_projection_with_slab(self):
        c = parse_constraint("PS[0:1:1]")
        assert c == Constraint((Projection("PS", (Hyperslab(0, 1, 1),)),))

    def test_two_projections(self):
        c = parse_constraint("PS[0:2:2][0:1:0],TS")
        assert c.projections[0].slabs == (Hyperslab(0, 2, 2), Hyperslab(0, 1, 0))
        assert c.projections[1] == Projection("TS", ())

    def test_zero_stride_rejected(self):
        with pytest.raises(ConstraintSyntaxError, match="stride"):
            parse_constraint("PS[3:0:5]")

    def test_start_beyond_stop_rejected(self):
        with pytest.raises(ConstraintSyntaxError, match="start"):
            parse_constraint("PS[5:1:3]")

    def test_empty_text_rejected(self):
        with pytest.raises(ConstraintSyntaxError):
            parse_constraint("")

    def test_syntax_error_carries_offset(self):
        with pytest.raises(ConstraintSyntaxError) as err:
            parse_constraint("PS[0:1:")
        assert err.value.offset == 7

    def test_trailing_comma_canonicalizes(self):
        assert parse_constraint("PS[0:1:1],") == parse_constraint("PS[0:1:1]")

    @pytest.mark.parametrize("text", ["PS[", "PS[0]", "PS[0:1:2]x", ",PS", "PS,,TS", "[0:1:2]"])
    def test_malformed_rejected(self, text):
        with pytest.raises(ConstraintSyntaxError):
            parse_constraint(text)

    @given(st.data())
    @settings(max_examples=200, deadline=None)
    def test_parse_render_roundtrip(self, data):
        projs = []
        n = data.draw(st.integers(1, 3))
        for i in range(n):
            slabs = []
            for _ in range(data.draw(st.integers(0, 3))):
                start = data.draw(st.integers(0, 50))
                stop = data.draw(st.integers(start, 60))
                stride = data.draw(st.integers(1, 9))
                slabs.append(Hyperslab(start, stride, stop))
            projs.append(Projection(f"v{i}", tuple(slabs)))
        c = Constraint(tuple(projs))
        assert parse_constraint(render_constraint(c)) == c


class TestSubset:
    def test_first_record_slice(self):
        out = subset(t1_dataset(), parse_constraint("PS[0:1:0]"))
        assert [d.size for d in out.dimensions] == [1, 2, 2]
        assert out.var("PS").data == [0.0, 1.0, 2.0, 3.0]

    def test_strided_slab_matches_frozen_oracle_values(self):
        out = subset(t1_dataset(), parse_constraint("PS[0:2:2][0:1:0]"))
        assert [out.dim(n).size for n in ("time", "lat", "lon")] == [2, 1, 2]
        # frozen from the brute-force gather oracle
        assert out.var("PS").data == [0.0, 1.0, 8.0, 9.0]

    def test_out_of_bounds_slab(self):
        with pytest.raises(SlabBoundsError):
            subset(t1_dataset(), parse_constraint("PS[0:1:9]"))

    def test_unknown_variable(self):
        with pytest.raises(UnknownVariableError):
            subset(t1_dataset(), parse_constraint("QQ[0:1:0]"))

    def test_rank_mismatch(self):
        with pytest.raises(RankMismatchError):
            subset(t1_dataset(), parse_constraint("PS[0:1:0][0:1:0][0:1:0][0:1:0]"))

    def test_coordinate_variables_ride_along(self):
        out = subset(t1_dataset(), parse_constraint("PS[1:1:2]"))
        assert out.var("time").data == [1.0, 2.0]
        assert out.var("lat").data == [-45.0, 45.0]

    def test_unprojected_variables_dropped(self):
        ds = t1_dataset()
        ds.variables.append(Variable("TS", ["lat", "lon"], "f64", {}, [1.0, 2.0, 3.0, 4.0]))
        out = subset(ds.validate(), parse_constraint("PS[0:1:0]"))
        assert not out.has_var("TS")

    def test_record_axis_stays_unlimited(self):
        out = subset(t1_dataset(), parse_constraint("PS[0:1:0]"))
        assert out.dim("time").unlimited

    def test_projecting_a_coordinate_variable_directly(self):
        out = subset(t1_dataset(), parse_constraint("time[1:1:2]"))
        assert out.var("time").data == [1.0, 2.0]
        assert out.dim("time").size == 2
        assert not out.has_var("PS")

    def test_conflicting_selections_on_shared_dim_rejected(self):
        ds = t1_dataset()
        ds.variables.append(Variable("TS", ["time", "lat"], "f64", {},
                                     [float(i) for i in range(6)]))
        ds.validate()
        from esgrid.gridfmt import SelectionConflictError

        with pytest.raises(SelectionConflictError):
            subset(ds, parse_constraint("PS[0:1:0],TS[1:1:2]"))
        # identical index sets on the shared dim are fine
        out = subset(ds, parse_constraint("PS[0:1:1],TS[0:1:1]"))
        assert out.dim("time").size == 2

    def test_randomized_against_oracle(self):
        rng = random.Random(1207)
        for _ in range(300):
            ds = random_dataset(rng)
            c = parse_constraint(random_constraint(rng, ds))
            expected = brute_subset_dataset(
                dims=[(d.name, d.size, d.unlimited) for d in ds.dimensions],
                variables=dataset_to_plain(ds)["vars"],
                gattrs=ds.global_attributes,
                projections=[(p.variable, [(s.start, s.stride, s.stop) for s in p.slabs])
                             for p in c.projections],
            )
            assert dataset_to_plain(subset(ds, c)) == expected


class TestConcat:
    def test_two_parts_append_along_time(self):
        a = record_series("PS", 2)
        b = record_series("PS", 1, t0=2.0, base=100.0)
        out = concat([a, b], "time")
        assert out.dim("time").size == 3
        assert out.var("PS").data == a.var("PS").data + b.var("PS").data
        assert out.var("time").data == [0.0, 1.0, 2.0]

    def test_schema_mismatch(self):
        with pytest.raises(ConcatError):
            concat([record_series("PS", 2, lat=2), record_series("PS", 2, lat=3)], "time")

    def test_axis_must_be_unlimited(self):
        a = t1_dataset()
        with pytest.raises(ConcatError, match="unlimited"):
            concat([a, a], "lat")

    def test_empty_part_list(self):
        with pytest.raises(ConcatError, match="empty"):
            concat([], "time")

    def test_global_attributes_from_first_part(self):
        a = record_series("PS", 1)
        b = record_series("PS", 1, t0=5.0)
        b.global_attributes["title"] = "other"
        assert concat([a, b], "time").global_attributes == a.global_attributes

    def test_conflicting_variable_attributes_rejected(self):
        a = record_series("PS", 1)
        b = record_series("PS", 1)
        b.var("PS").attributes["units"] = "hPa"
        with pytest.raises(ConcatError, match="attributes"):
            concat([a, b], "time")

    def test_differing_non_record_values_rejected(self):
        a = record_series("PS", 1)
        b = record_series("PS", 1)
        b.var("lat").data = [-10.0, 10.0]
        with pytest.raises(ConcatError, match="non-record"):
            concat([a, b], "time")

    def test_twenty_record_join_of_two_holdings(self):
        # two holdings, ten records each, joined after identical subsetting
        f1 = record_series("PS", 12)
        f2 = record_series("PS", 15, t0=12.0, base=1000.0)
        ten = parse_constraint("PS[0:1:9]")
        joined = concat([subset(f1, ten), subset(f2, ten)], "time")
        assert joined.dim("time").size == 20
        assert joined.var("PS").data == (
            subset(f1, ten).var("PS").data + subset(f2, ten).var("PS").data)

    def test_concat_is_associative(self):
        rng = random.Random(7)
        for _ in range(40):
            total = record_series("PS", rng.randint(3, 9))
            n = total.dim("time").size
            cut1, cut2 = sorted(rng.sample(range(1, n), 2)) if n > 2 else (1, 2)
            a = subset(total, parse_constraint(f"PS[0:1:{cut1 - 1}]"))
            b = subset(total, parse_constraint(f"PS[{cut1}:1:{cut2 - 1}]"))
            c = subset(total, parse_constraint(f"PS[{cut2}:1:{n - 1}]"))
            left = concat([concat([a, b], "time"), c], "time")
            right = concat([a, concat([b, c], "time")], "time")
            assert left.structurally_equal(right)
            assert left.structurally_equal(total)

    def test_non_leading_record_axis_matches_oracle(self):
        # a variable whose dims put the record axis second still concatenates
        rng = random.Random(31)
        from esgrid.gridfmt import Dimension, GridDataset

        def part(n_time, base):
            data = [base + float(i) for i in range(2 * n_time)]
            return GridDataset(
                dimensions=[Dimension("time", n_time, unlimited=True),
                            Dimension("lat", 2)],
                variables=[Variable("QQ", ["lat", "time"], "f64", {}, data)],
            ).validate()

        for _ in range(25):
            n1, n2 = rng.randint(1, 4), rng.randint(1, 4)
            a, b = part(n1, 0.0), part(n2, 100.0)
            out = concat([a, b], "time")
            expected = brute_concat_var(
                [a.var("QQ").data, b.var("QQ").data],
                [[2, n1], [2, n2]], axis_pos=1)
            assert out.var("QQ").data == expected
            assert out.var_shape(out.var("QQ")) == [2, n1 + n2]

    def test_i64_fields_concatenate(self):
        def part(values):
            from esgrid.gridfmt import Dimension, GridDataset

            return GridDataset(
                dimensions=[Dimension("time", len(values), unlimited=True)],
                variables=[Variable("N", ["time"], "i64", {}, values)],
            ).validate()

        out = concat([part([1, 2]), part([3])], "time")
        assert out.var("N").data == [1, 2, 3]
        assert read_dataset(write_dataset(out)).var("N").data == [1, 2, 3]

    def test_subset_concat_commutation_inside_first_part(self):
        rng = random.Random(8)
        for _ in range(40):
            na, nb = rng.randint(2, 6), rng.randint(1, 5)
            a = record_series("PS", na)
            b = record_series("PS", nb, t0=float(na), base=500.0)
            start = rng.randrange(na)
            stop = rng.randrange(start, na)
            stride = rng.randint(1, 3)
            slab = f"PS[{start}:{stride}:{stop}]"
            via_concat = subset(concat([a, b], "time"), parse_constraint(slab))
            direct = subset(a, parse_constraint(slab))
            assert via_concat.structurally_equal(direct)


class TestCodec:
    def test_empty_dataset_roundtrip(self):
        ds = GridDataset()
        raw = write_dataset(ds)
        assert raw[:4] == b"ESGN" and raw[4] == 1
        assert read_dataset(raw).structurally_equal(ds)

    def test_t1_roundtrip_field_for_field(self):
        ds = t1_dataset()
        back = read_dataset(write_dataset(ds))
        assert back.structurally_equal(ds)
        assert back.var("PS").attributes == {"units": "Pa"}

    def test_bad_magic(self):
        raw = bytearray(write_dataset(t1_dataset()))
        raw[:4] = b"XXXX"
        with pytest.raises(FormatError, match="magic"):
            read_dataset(bytes(raw))

    def test_truncated_payload(self):
        raw = write_dataset(t1_dataset())
        with pytest.raises(FormatError):
            read_dataset(raw[:-4])

    def test_trailing_garbage_is_length_disagreement(self):
        raw = write_dataset(t1_dataset()) + b"\x00" * 8
        with pytest.raises(FormatError, match="disagreement"):
            read_dataset(raw)

    def test_unsupported_version_rejected(self):
        raw = bytearray(write_dataset(t1_dataset()))
        raw[4] = 2
        with pytest.raises(FormatError, match="version"):
            read_dataset(bytes(raw))

    def test_non_json_header_rejected(self):
        import struct

        header = b"this is not json"
        raw = b"ESGN" + bytes([1]) + struct.pack("<I", len(header)) + header
        with pytest.raises(FormatError, match="malformed header"):
            read_dataset(raw)

    def test_header_missing_required_key(self):
        import struct

        header = b'{"dimensions":[],"variables":[]}'
        raw = b"ESGN" + bytes([1]) + struct.pack("<I", len(header)) + header
        with pytest.raises(FormatError, match="attributes"):
            read_dataset(raw)

    def test_misaligned_segment_rejected(self):
        import json
        import struct

        header = json.dumps({
            "dimensions": [{"name": "x", "size": 1, "unlimited": False}],
            "variables": [{"name": "v", "dims": ["x"], "dtype": "f64",
                           "attributes": {}, "offset": 4, "length": 8}],
            "attributes": {},
        }, separators=(",", ":")).encode()
        raw = b"ESGN" + bytes([1]) + struct.pack("<I", len(header)) + header + b"\x00" * 12
        with pytest.raises(FormatError, match="misaligned"):
            read_dataset(raw)

    def test_write_is_deterministic(self):
        ds = t1_dataset()
        assert write_dataset(ds) == write_dataset(ds)
        assert checksum(write_dataset(ds)) == checksum(write_dataset(ds))

    def test_attribute_order_does_not_change_bytes(self):
        a = t1_dataset()
        b = t1_dataset()
        b.global_attributes = dict(reversed(list(a.global_attributes.items())))
        b.global_attributes["zz"] = 1
        a.global_attributes["zz"] = 1
        assert write_dataset(a) == write_dataset(b)

    def test_randomized_roundtrips(self):
        rng = random.Random(42)
        for _ in range(200):
            ds = random_dataset(rng, max_dims=4, max_vars=4)
            raw = write_dataset(ds)
            back = read_dataset(raw)
            assert back.structurally_equal(ds)
            assert write_dataset(back) == raw

    @given(st.integers(0, 2**31))
    @settings(max_examples=60, deadline=None)
    def test_roundtrip_property(self, seed):
        ds = random_dataset(random.Random(seed))
        assert read_dataset(write_dataset(ds)).structurally_equal(ds)


class TestChecksum:
    def test_standard_vectors(self):
        assert checksum(b"") == (
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855")
        assert checksum(b"abc") == (
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad")

    def test_slab_index_set_oracle_matches_hyperslab(self):
        rng = random.Random(3)
        for _ in range(200):
            size = rng.randint(1, 40)
            start = rng.randrange(size)
            stop = rng.randrange(start, size)
            stride = rng.randint(1, 5)
            assert Hyperslab(start, stride, stop).indices() == \
                slab_index_set(start, stride, stop, size)
