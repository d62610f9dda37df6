import setuptools

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setuptools.setup(
    name='contactmae',
    version='0.1.0',
    description='Contact geometry of scalar second-order PDEs: '
                'Monge-Ampère structures, characteristics and formal jets',
    long_description=long_description,
    long_description_content_type="text/markdown",
    license='MIT',
    packages=['contactmae'],
    python_requires='>=3.8',
    install_requires=['pyyaml', 'numpy'],
    extras_require={'test': ['hypothesis']},
    entry_points={
        'console_scripts': ['contactmae=contactmae.cli:main'],
    },
)
