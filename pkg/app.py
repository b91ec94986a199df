import logging

import streamlit as st

from src.utils.settings import configure_logging, get_settings

# Configure debug settings
DEBUG = get_settings().debug
configure_logging(DEBUG)
if DEBUG:
    st.write("Debug mode enabled")

experiment_page = st.Page(
    "src/experiment_page.py",
    title="Run experiment",
    icon="🧮",
    url_path="/experiment",
    default=True,
)
run_log_page = st.Page(
    "src/run_log_page.py",
    title="Run logs",
    icon="📄",
    url_path="/runs",
)

with st.sidebar:
    st.caption(f"Run logs: {get_settings().run_log_dir}")
    if DEBUG:
        st.write(get_settings())
        logging.debug("Dashboard started")

pages = st.navigation([experiment_page, run_log_page])
pages.run()
