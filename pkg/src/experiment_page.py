import logging

import streamlit as st

from src.cholqr.error_model import Algorithm
from src.cholqr.exceptions import CholQRError
from src.cholqr.harness import (
    PRESETS,
    emit_table,
    make_config,
    preset,
    records_frame,
    run_experiment,
)
from src.utils.run_log import write_run_log

PRESET_DEFAULT = "preset default"

st.title("Run experiment")

# Initialize session state
if "records" not in st.session_state:
    st.session_state.records = None
if "config" not in st.session_state:
    st.session_state.config = None


def build_config():
    """Collect the form inputs into an ExperimentConfig."""
    common = dict(precision=st.session_state.precision, output_format="markdown")
    if st.session_state.s2_norm != PRESET_DEFAULT:
        common["s2_norm"] = st.session_state.s2_norm
    if st.session_state.source == "Preset":
        seeds = list(range(1, st.session_state.seed_count + 1))
        return preset(st.session_state.preset_name, seeds=seeds, **common)

    kappas = [float(v) for v in st.session_state.kappas.split(",") if v.strip()]
    shift_modes = st.session_state.shift_modes or ["randomized"]
    return make_config(
        name=f"{st.session_state.algorithm}_{st.session_state.m}x{st.session_state.n}",
        shapes=[(st.session_state.m, st.session_state.n)],
        kappas=kappas,
        algorithms=[st.session_state.algorithm],
        shift_modes=shift_modes,
        lam=st.session_state.lam if st.session_state.lam > 0 else "auto",
        seeds=list(range(1, st.session_state.seed_count + 1)),
        **common,
    )


with st.container(border=True):
    st.radio("Configuration", ["Preset", "Custom"], key="source", horizontal=True)

    if st.session_state.source == "Preset":
        st.selectbox("Preset", sorted(PRESETS), key="preset_name")
    else:
        st.selectbox("Algorithm", [a.value for a in Algorithm], index=3, key="algorithm")
        cols = st.columns(2)
        with cols[0]:
            st.number_input("m", min_value=2, value=1024, step=1, key="m")
        with cols[1]:
            st.number_input("n", min_value=2, value=32, step=1, key="n")
        st.text_input("κ₂(T) values (comma-separated)", value="1e8,1e10,1e12", key="kappas")
        st.multiselect(
            "Shift modes",
            ["randomized", "deterministic", "deterministic+randomized"],
            default=["randomized"],
            key="shift_modes",
        )
        st.number_input(
            "λ (0 = auto)",
            min_value=0.0,
            max_value=10.0,
            value=0.0,
            key="lam",
            help="6 when max(m, n²) <= 4096, else 8",
        )

    cols = st.columns(3)
    with cols[0]:
        st.slider("Seeds", min_value=1, max_value=10, value=10, key="seed_count")
    with cols[1]:
        st.selectbox("Precision", ["f64", "f32"], key="precision")
    with cols[2]:
        st.selectbox("3C s₂ norm", [PRESET_DEFAULT, "g", "two"], key="s2_norm")

    if st.button("Run", type="primary", use_container_width=True):
        try:
            config = build_config()
        except (CholQRError, ValueError) as e:
            st.error(f"Invalid configuration: {e}")
            logging.error(f"Invalid configuration from dashboard: {e}")
        else:
            with st.spinner(f"Running {config.name}..."):
                st.session_state.records = run_experiment(config)
                st.session_state.config = config
            path = write_run_log(
                emit_table(st.session_state.records, "csv"),
                config.model_dump(mode="json"),
                config.name,
            )
            st.success(f"Saved run log {path.name}")

if st.session_state.records:
    records = st.session_state.records
    config = st.session_state.config
    broken = sum(not r.ok for r in records)
    if broken:
        st.warning(f"{broken} of {len(records)} cells broke down")
    st.markdown(emit_table(records, "markdown", axis=config.table_axis))
    with st.expander("All records"):
        st.dataframe(records_frame(records), hide_index=True)
    st.download_button(
        "Download CSV",
        emit_table(records, "csv"),
        file_name=f"{config.name}.csv",
        mime="text/csv",
    )
