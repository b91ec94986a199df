import logging

import streamlit as st

from src.cholqr.harness import emit_table, parse_table
from src.utils.run_log import list_run_logs, read_run_log
from src.utils.settings import get_settings

st.title("Run logs")


@st.cache_data(ttl=30)
def load_run_logs():
    return list_run_logs()


def display_run_log(name: str):
    try:
        records = parse_table(read_run_log(name))
    except Exception as e:
        st.error(f"Error loading run log: {str(e)}")
        logging.error(f"Error loading run log {name}: {str(e)}", exc_info=True)
        return
    axis = "kappa"
    if len({r.n for r in records}) > 1:
        axis = "n"
    elif len({r.m for r in records}) > 1:
        axis = "m"
    st.markdown(emit_table(records, "markdown", axis=axis))


logs = load_run_logs()
if logs.empty:
    st.info(f"No run logs in {get_settings().run_log_dir}")
else:
    st.dataframe(logs[["file", "label", "created", "rows"]], hide_index=True)
    selected = st.selectbox("Run log", logs["file"].tolist())
    if selected:
        config = logs.loc[logs["file"] == selected, "config"].iloc[0]
        if config:
            with st.expander("Configuration"):
                st.json(config)
        display_run_log(selected)
    if st.button("Refresh"):
        load_run_logs.clear()
        st.rerun()
