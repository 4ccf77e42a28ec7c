from setuptools import setup, find_packages

setup(
    name="slo-ledger",
    version="0.1",
    packages=find_packages(exclude=["tests", "tests.*"]),
    package_data={
        "src.slogen": ["templates/*.j2"],
    },
    python_requires=">=3.9",
    install_requires=[
        # Data Processing
        "pandas==2.2.3",
        "numpy>=1.26.0",
        "python-dotenv==1.0.1",
        "PyYAML==6.0.2",
        "jsonschema==4.23.0",

        # Machine Learning
        "scikit-learn==1.6.1",

        # Services and Collection
        "fastapi==0.115.6",
        "uvicorn==0.34.0",
        "httpx==0.28.1",
        "requests==2.32.3",
        "prometheus_client==0.21.1",

        # Command Line and Logging
        "click==8.1.8",
        "Jinja2==3.1.5",
        "python-json-logger==3.2.1",
        "tqdm==4.67.1",

        # Visualization
        "matplotlib==3.9.4",
    ],
    extras_require={
        'dev': [
            "black==25.1.0",
            "flake8==7.1.1",
            "pytest==8.3.4",
            "pytest-cov==6.0.0"
        ],
        'docs': [
            "mkdocs==1.6.1",
            "mkdocs-material==9.6.2",
            "mkdocstrings==0.28.0"
        ]
    },
    entry_points={
        "console_scripts": [
            "slo-ledger=src.harness.cli:main",
        ],
    },
)
